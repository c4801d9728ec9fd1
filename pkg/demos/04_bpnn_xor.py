# # Backpropagation on XOR
#
# XOR is the smallest problem a single layer cannot solve. A 2-4-1 sigmoid
# network trained by per-sample gradient descent gets it right.

import numpy as np

from cosmicseg import bpnn

X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
y = np.array([[0], [1], [1], [0]], dtype=float)

net = bpnn.init_network([2, 4, 1], seed=0)
print(bpnn.predict(net, X).ravel().round(3))

# ## Gradients
#
# The analytic gradient of the half squared error agrees with a
# finite-difference estimate.

loss, gw, gb = bpnn.gradients(net, X[1], y[1])
h = 1e-5
probe = net.copy()
probe.weights[0][0, 0] += h
up = bpnn.sample_loss(probe, X[1], y[1])
probe.weights[0][0, 0] -= 2 * h
down = bpnn.sample_loss(probe, X[1], y[1])
print(gw[0][0, 0], (up - down) / (2 * h))

# ## Training

order = np.arange(4)
for epoch in range(1, 5001):
    bpnn.sgd_epoch(net, X, y, order, 0.5)
    if epoch % 1000 == 0:
        print(epoch, bpnn.dataset_mse(net, bpnn.Dataset(X, y)))

print(bpnn.predict(net, X).ravel().round(3))
print(bpnn.evaluate(net, (X, y), 0.5, "training"))

# The trained weights serialize to JSON and load back unchanged.

print(bpnn.MlpNetwork.from_json(net.to_json()).equals(net))
