"""Two-party split training, and what the feature party gets to see.

A feature party owns the inputs and a bottom network; a label party owns the
labels and a top network. Per batch, activations cross the boundary one way
and their gradients come back. The feature party records that traffic - the
transcript - and the transcript is all an attacker needs later.

Run: python demos/02_split_training.py
"""

import numpy as np

from splitlab.data import split_standardize, synth_regression
from splitlab.defense import NoDefense
from splitlab.metrics import mean_value_baseline, metric_pair
from splitlab.nn import build_network
from splitlab.protocol import SplitSession, predict, train_split

ds = synth_regression(n=2000, d=8, noise_std=0.1, seed=7)
train, test = split_standardize(ds, seed=7)
print(f"dataset: {ds.name}, train {train.n} / test {test.n}, standardized")

bottom = build_network([train.d, 16, 8], seed=1, role="bottom")   # feature party
top = build_network([8, 1], seed=2, role="top")                   # label party
session = SplitSession(bottom, top, NoDefense(), lr=0.01, batch_size=64,
                       epochs=60, seed=7)

session, transcript, trace = train_split(session, train)
print(f"\ntraining loss: epoch 1 {trace[0]:.4f} -> epoch {len(trace)} {trace[-1]:.4f}")
print(f"transcript: {len(transcript)} records "
      f"({session.epochs} epochs x {int(np.ceil(train.n / session.batch_size))} batches)")

rec = transcript.records[0]
print(f"one record: epoch {rec.epoch}, batch of {len(rec.indices)}, "
      f"activations {rec.activations.shape}, gradient {rec.gradient.shape}")

mp_train = mean_value_baseline(train.labels, train.labels)
mp_test = mean_value_baseline(train.labels, test.labels)
fit_train = metric_pair(predict(session, train.features), train.labels)
fit_test = metric_pair(predict(session, test.features), test.labels)

print("\n              MAE      MSE")
print(f"train fit   {fit_train.mae:7.4f} {fit_train.mse:8.4f}")
print(f"test  fit   {fit_test.mae:7.4f} {fit_test.mse:8.4f}")
print(f"train mean  {mp_train.mae:7.4f} {mp_train.mse:8.4f}   (constant-mean baseline)")
print(f"test  mean  {mp_test.mae:7.4f} {mp_test.mse:8.4f}")

print("\nHow loud are the gradients over training? (mean |G| per epoch)")
for epoch in (0, 4, 14, 29, 59):
    grads = [np.abs(r.gradient).mean() for r in transcript.records if r.epoch == epoch]
    print(f"  epoch {epoch + 1:3d}: {np.mean(grads):.5f}")
print("early epochs shout the labels; converged epochs whisper. The attack "
      "in demo 03 replays all of them.")
