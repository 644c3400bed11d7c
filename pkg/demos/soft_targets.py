"""How the soft target relaxes the order of a gold herb list.

Run: python demos/soft_targets.py
"""

import numpy as np

from seq2set.seq2seq import soft_target, step_loss

# Class 0 is end-of-sequence; classes 1..5 are herbs. Gold list: herbs 1, 2, 3.
gold = [1, 2, 3]
n = 6
np.set_printoptions(precision=3, suppress=True)

print("target distribution per decoding step (columns: EOS, h1..h5)")
for t in range(len(gold)):
    print(f"  step {t}: {soft_target(gold, n, t, eos=0)}")
print(f"  final : {soft_target(gold, n, len(gold), eos=0)}  (end of list stays one-hot)")

# At step 0 the model puts 90% of its mass on herb 2: correct herb, wrong slot.
# Compare against the same 90% on herb 5, which is not in the prescription.
q0 = soft_target(gold, n, 0, eos=0)
hard0 = np.eye(n)[gold[0]]
for name, tok in (("in-set herb 2", 2), ("out-of-set herb 5", 5)):
    p = np.full(n, 0.1 / (n - 1))
    p[tok] = 0.9
    print(f"{name:>18}: soft loss {step_loss(q0, p):.3f}   hard loss {step_loss(hard0, p):.3f}")
print("the hard loss cannot tell the two apart; the soft loss prefers the in-set herb")
