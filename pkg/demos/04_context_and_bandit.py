"""Per-query token-density selection with a neural linear bandit.

A synthetic linear environment stands in for the edge model: each density's
success probability is a known linear function of the latent context, so
the policy's choices can be scored against the clairvoyant optimum while
it learns online from binary feedback.
"""

import numpy as np

from tokenbridge import bandit as bd

ACTIONS = (2, 4, 8, 16, 32)
LAM, N_FRAMES, ALPHA, LAM0 = 1 / 16384, 512, 0.05, 0.1
ROUNDS = 3000

rng = np.random.default_rng(0)
d = 8
base = {2: 0.25, 4: 0.45, 8: 0.80, 16: 0.90, 32: 0.92}
w = {a: np.concatenate([[base[a]], rng.normal(0, 0.05, d - 1)]) for a in ACTIONS}
cost = {a: LAM * N_FRAMES * a for a in ACTIONS}

print("true per-arm success rates (at the mean context) and volume costs:")
for a in ACTIONS:
    print(f"  density {a:2d}: success ~{base[a]:.2f}, cost {cost[a]:.4f}, "
          f"utility ~{base[a] - cost[a]:+.3f}")

state = bd.fresh_state(ACTIONS, d, LAM0)
window, hits = [], []
for t in range(ROUNDS):
    u = np.concatenate([[1.0], rng.normal(0, 0.25, d - 1)])
    a, _ = bd.select_action(state, u, N_FRAMES, LAM, ALPHA, rng)
    q = {b: float(np.clip(u @ w[b], 0, 1)) for b in ACTIONS}
    best = max(ACTIONS, key=lambda b: q[b] - cost[b])
    reward_bit = float(rng.uniform() < q[a])
    bd.update(state, a, u, reward_bit)
    window.append(a)
    hits.append(a == best)
    if (t + 1) % 500 == 0:
        picks = {b: window.count(b) for b in ACTIONS if window.count(b)}
        print(f"rounds {t - 498:4d}-{t + 1:4d}: optimal-arm rate "
              f"{100 * np.mean(hits):5.1f}%  picks {picks}")
        window, hits = [], []

print("\nposterior mean success estimate per arm at the mean context:")
u0 = np.concatenate([[1.0], np.zeros(d - 1)])
for a in ACTIONS:
    est = float(np.clip(u0 @ state.arms[a].posterior_mean(), 0, 1))
    print(f"  density {a:2d}: estimated {est:.3f} vs true {base[a]:.3f}")
