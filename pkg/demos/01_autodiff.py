"""Reverse-mode autodiff on a tape, checked against finite differences."""

import numpy as np

from ftm import tensor as T
from ftm.optim import AdamState, adam_step
from ftm.tensor import Tape, Tensor, backprop, finite_diff_check

rng = np.random.default_rng(0)

# a tiny logistic model: loss = mean(-log sigmoid(y * (x @ w)))
x = rng.normal(size=(32, 3))
y = np.sign(x @ np.array([[1.0], [-2.0], [0.5]]))
w = Tensor(np.zeros((3, 1)), name="w", requires_grad=True)


def loss_fn(params):
    return T.tmean(-T.log_sigmoid((x @ params["w"]) * y))


with Tape() as tape:
    loss = loss_fn({"w": w})
print("ops recorded:", len(tape))
print("loss at w=0:", loss.item(), "(log 2 =", np.log(2), ")")

grads = backprop(tape, loss, {"w": w})
print("gradient:", grads["w"].ravel())

# central differences agree to ~1e-10
print("max rel err vs finite differences:", finite_diff_check(loss_fn, {"w": w}))

# a few Adam steps
state = AdamState(learning_rate=0.1)
for step in range(50):
    with Tape() as tape:
        loss = loss_fn({"w": w})
    adam_step(state, {"w": w}, backprop(tape, loss, {"w": w}))
print("after 50 Adam steps: loss", round(loss.item(), 4), "w", np.round(w.data.ravel(), 3))
