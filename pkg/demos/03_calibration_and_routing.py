"""Fix an overconfident model with temperature scaling, then route on it.

The synthetic backend produces answers whose confidence is calibrated by
construction, then sharpens the logits by gamma=2 to emulate a typically
overconfident network.
"""

from tokenbridge.backends import Role, SyntheticProfile
from tokenbridge.calibration import constrained_softmax, ece, fit_temperature
from tokenbridge.router import route

profile = SyntheticProfile(gamma=2.0)
samples = []
for i in range(3000):
    resp = profile.response(f"q{i}", Role.SMALL, None, seed=0)
    samples.append((resp.logits, resp.ground_truth_index))

model = fit_temperature(samples)
print(f"fitted temperature: T = {model.T:.3f} (logits were sharpened x2)")


def preds(T):
    out = []
    for logits, gt in samples:
        d = constrained_softmax(logits, T)
        out.append((d.confidence, d.argmax() == gt))
    return out


before, after = ece(preds(1.0)), ece(preds(model.T))
print(f"ECE before/after: {before.ece:.4f} -> {after.ece:.4f}")

print("\nreliability bins after scaling (confidence -> empirical accuracy):")
for lo, hi, conf, acc, count in after.bins:
    if count:
        print(f"  [{lo:.1f},{hi:.1f})  conf {conf:.3f}  acc {acc:.3f}  n={count}")

tau = 0.6
accepted = escalated = accepted_correct = 0
for logits, gt in samples:
    d = constrained_softmax(logits, model.T)
    decision = route(d, tau)
    if decision.accepted:
        accepted += 1
        accepted_correct += decision.option_index == gt
    else:
        escalated += 1
print(f"\nrouting at tau={tau}: {accepted} accepted locally "
      f"({100 * accepted_correct / accepted:.1f}% correct), {escalated} escalated")
