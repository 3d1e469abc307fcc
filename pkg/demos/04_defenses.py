"""The label party fights back.

Five defenses, one attacker. Noise and gradient compression perturb what
crosses the wire; label extension hides the real label at a secret slot of a
wider target vector, either drawn once at random or refreshed adaptively from
the model's own outputs. The interesting question is always the pair
(original-task error, attack error): a defense only counts if the first stays
low while the second climbs to the constant-mean baseline.

This demo runs at the small-sample scale (n=500, so the 1% leak is just 4
labels) where extension defenses have their published bite.

Run: python demos/04_defenses.py  (a few minutes)
"""

from dataclasses import replace

from splitlab.defense import sufficiency_check
from splitlab.harness import ExperimentConfig, run_experiment

base = ExperimentConfig(seed=0, synth_n=500, batch_size=16)

defenses = [
    ("no defense", {"name": "none"}),
    ("label noise (laplace 1.0)", {"name": "label_noise", "scale": 1.0}),
    ("gradient compression (keep 50%)", {"name": "gradient_compression", "keep_rate": 0.5}),
    ("random extension (width 8)", {"name": "random_extension", "dims": 8}),
    ("adaptive extension (width 8)", {"name": "adaptive_extension", "dims": 8}),
]

print("counting argument for width-8 extensions at this scale:")
rep = sufficiency_check(dims=8, cut_dim=8, n_samples=400)
print(f"  unknowns {rep.unknowns} vs equations {rep.equations} "
      f"-> underdetermined: {rep.underdetermined}\n")

rows = []
for label, spec in defenses:
    result = run_experiment(replace(base, defense=spec))
    run = result.runs[0]
    rows.append((label, run.original_test.mae, run.attack_train.mae,
                 result.mp_train.mae))
    print(f"ran: {label}")

print(f"\n{'defense':<34} {'orig test MAE':>14} {'attack MAE':>11} {'attack/MP':>10}")
for label, orig, attack, mp in rows:
    print(f"{label:<34} {orig:>14.4f} {attack:>11.4f} {attack / mp:>10.2f}")

print("""
Reading the table:
  - noise and compression trade original-task error for defense, point by
    point on one curve;
  - the random extension pushes the attack to the baseline outright, at a
    moderate utility cost;
  - the adaptive extension keeps utility almost free. Its attack row is the
    interesting one: because only the hidden label column ever produces
    training signal, its gradients remain a clean (if rescaled) copy of the
    undefended ones, and this lab's full-strength attacker still reads labels
    through it. Hiding the column is not the same as hiding the label.
""")
