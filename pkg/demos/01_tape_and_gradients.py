"""Tour of the differentiation tape.

The whole laboratory runs on a small reverse-mode engine whose defining
feature is that a backward pass can itself be recorded, making gradients
ordinary tensors you can keep differentiating. That is exactly what the
label-inference attack needs: its loss contains "the gradient of another
loss" as a sub-expression.

Run: python demos/01_tape_and_gradients.py
"""

import numpy as np

from splitlab.autograd import Tape, backward, constant, matmul, mse, mul, sum_all, tanh

rng = np.random.default_rng(0)

print("== first-order gradients ==")
tape = Tape()
x = tape.leaf([[3.0]])
y = mul(x, x)                      # y = x^2
(dy,) = backward(y, [x])
print(f"d(x^2)/dx at x=3      -> {dy.data[0, 0]}   (expected 6)")

print("\n== second order via a recorded backward pass ==")
tape = Tape()
x = tape.leaf([[2.0]])
y = mul(mul(x, x), x)              # y = x^3
(g1,) = backward(y, [x], create_graph=True)
(g2,) = backward(g1, [x])
print(f"d(x^3)/dx at x=2      -> {g1.data[0, 0]}   (3x^2 = 12)")
print(f"d2(x^3)/dx2 at x=2    -> {g2.data[0, 0]}   (6x = 12)")

print("\n== the attack's core pattern: differentiate a gradient's mismatch ==")
# One linear layer E @ W with a mean-squared loss. We ask: how should W change
# so that dLoss/dE moves toward a recorded target gradient? Answering that
# requires differentiating *through* the backward pass.
e_vals = rng.normal(size=(5, 4))
w_vals = rng.normal(size=(4, 1)) * 0.5
labels = rng.normal(size=(5, 1))
recorded = rng.normal(size=(5, 4)) * 0.1   # stand-in for a gradient seen on the wire

tape = Tape()
e = tape.leaf(e_vals)
w = tape.leaf(w_vals)
loss = mse(matmul(e, w), constant(labels))
(grad_e,) = backward(loss, [e], create_graph=True)   # stays on the tape
mismatch = mse(constant(recorded), grad_e)
(dw,) = backward(mismatch, [w])
print(f"gradient of the gradient-mismatch w.r.t. W: {np.round(dw.data[:, 0], 4)}")

# sanity: central finite differences on the same quantity
step = 1e-5


def mismatch_at(w_try):
    t = Tape()
    e2 = t.leaf(e_vals)
    w2 = t.leaf(w_try)
    inner = mse(matmul(e2, w2), constant(labels))
    (ge,) = backward(inner, [e2], create_graph=True)
    return mse(constant(recorded), ge).item()


numeric = np.zeros_like(w_vals)
for i in range(w_vals.shape[0]):
    up, down = w_vals.copy(), w_vals.copy()
    up[i, 0] += step
    down[i, 0] -= step
    numeric[i, 0] = (mismatch_at(up) - mismatch_at(down)) / (2 * step)
print(f"finite-difference check:                    {np.round(numeric[:, 0], 4)}")
print(f"max abs difference: {np.abs(dw.data - numeric).max():.2e}")

print("\n== tanh keeps its curvature through double backward ==")
tape = Tape()
x = tape.leaf([[0.4]])
(g1,) = backward(sum_all(tanh(x)), [x], create_graph=True)
(g2,) = backward(g1, [x])
t = np.tanh(0.4)
print(f"tanh''(0.4) via tape  -> {g2.data[0, 0]:+.6f}")
print(f"analytic -2 t (1-t^2) -> {-2 * t * (1 - t * t):+.6f}")
