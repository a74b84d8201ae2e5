"""Pure-Python kernels. Same arithmetic, same arc order and same tie-breaking as ``_kernels.pyx``."""

import math

import numpy as np

NAME = "python"
_EPS = 1e-12


def _ssp(d, s, vc, k, aggregate):
    """Successive shortest augmenting paths, one job per augmentation.

    Node layout: 0 source, 1+n sender n, 1+N+m receiver m, 2N+1 sink. Arc costs are
    marginal costs of the next unit (forward) or refunds of the last unit (backward),
    which is exact because every cost piece is convex in its flow.
    """
    n = len(d)
    delta = [[0] * n for _ in range(n)]
    senders = [i for i in range(n) if d[i] > 0]
    receivers = [j for j in range(n) if s[j] > 0]
    if not senders or not receivers:
        return delta
    out = [0] * n
    inn = [0] * n
    sink = 2 * n + 1
    nv = 2 * n + 2
    while True:
        arcs = []
        for i in senders:
            left = d[i] - out[i]
            if left > 0:
                arcs.append((0, 1 + i, -vc[i] * (2 * left - 1), 0, i, 1))
            if out[i] > 0:
                arcs.append((1 + i, 0, vc[i] * (2 * left + 1), 0, i, -1))
        for i in senders:
            for j in receivers:
                x = delta[i][j]
                if x < min(d[i], s[j]):
                    arcs.append((1 + i, 1 + n + j, k[i][j] * (2 * x + 1), 1, i * n + j, 1))
                if x > 0:
                    arcs.append((1 + n + j, 1 + i, -k[i][j] * (2 * x - 1), 1, i * n + j, -1))
        for j in receivers:
            if not aggregate or inn[j] < s[j]:
                arcs.append((1 + n + j, sink, 0.0, 2, j, 1))
            if inn[j] > 0:
                arcs.append((sink, 1 + n + j, 0.0, 2, j, -1))
        dist = [math.inf] * nv
        pred = [-1] * nv
        dist[0] = 0.0
        for _ in range(nv - 1):
            changed = False
            for idx, (u, w, c, _, _, _) in enumerate(arcs):
                if dist[u] != math.inf and dist[u] + c < dist[w]:
                    dist[w] = dist[u] + c
                    pred[w] = idx
                    changed = True
            if not changed:
                break
        if not dist[sink] < -_EPS:
            return delta
        node = sink
        while node != 0:
            u, _, _, kind, key, sign = arcs[pred[node]]
            if kind == 0:
                out[key] += sign
            elif kind == 1:
                delta[key // n][key % n] += sign
            else:
                inn[key] += sign
            node = u


def solve_batch(diffs, vcoef, kmat, aggregate):
    """Solve the transfer problem for each row of ``diffs`` (request minus reservation).

    Returns ``(delta, transfer_cost, violation_cost)`` with shapes (B, N, N), (B,), (B,).
    """
    diffs = np.asarray(diffs, dtype=np.int64)
    nb, n = diffs.shape
    vc = [float(x) for x in vcoef]
    k = [[float(x) for x in row] for row in kmat]
    deltas = np.zeros((nb, n, n), dtype=np.int64)
    ct = np.zeros(nb)
    cv = np.zeros(nb)
    for r in range(nb):
        row = diffs[r].tolist()
        d = [x if x > 0 else 0 for x in row]
        s = [-x if x < 0 else 0 for x in row]
        delta = _ssp(d, s, vc, k, bool(aggregate))
        t = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    t += k[i][j] * float(delta[i][j] * delta[i][j])
        v = 0.0
        for i in range(n):
            left = d[i] - sum(delta[i])
            if left > 0:
                v += vc[i] * float(left * left)
        deltas[r] = delta
        ct[r] = t
        cv[r] = v
    return deltas, ct, cv


def back_process(critic, fired, phi, explore_u, rand_levels, eps, alpha, rewards, n_levels):
    """Run the exploratory back-processing iterations of one slot, updating ``critic`` in place."""
    n_actions = len(rewards)
    n_fired = len(fired)
    for it in range(explore_u.shape[0]):
        w = [0] * n_fired
        scalar = 0.0
        for f in range(n_fired):
            if explore_u[it, f] < eps:
                w[f] = int(rand_levels[it, f])
            else:
                w[f] = int(np.argmax(critic[fired[f]]))
            scalar += phi[f] * w[f]
        action = level_to_action(math.floor(scalar + 0.5), n_levels, n_actions)
        r = rewards[action]
        for f in range(n_fired):
            z = critic[fired[f], w[f]]
            critic[fired[f], w[f]] = z + alpha * phi[f] * (r - z)


def level_to_action(level, n_levels, n_actions):
    if n_levels <= 1:
        return 0
    level = min(max(int(level), 0), n_levels - 1)
    return int(math.floor(level * (n_actions - 1) / (n_levels - 1) + 0.5))
