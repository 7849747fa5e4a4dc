"""Independent reference computations used by the test suite.

Nothing here calls into the code paths it is used to check.
"""
from collections import deque

import numpy as np


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at flat array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def naive_mlp(x, weights, biases, activations, dueling=None):
    """Loop-based evaluation of a dense network, one sample at a time."""
    acts = {"relu": lambda z: max(z, 0.0), "linear": lambda z: z, "tanh": np.tanh}
    h = list(map(float, x))
    for w, b, act in zip(weights, biases, activations):
        h = [acts[act](sum(w[i][j] * h[j] for j in range(len(h))) + b[i]) for i in range(len(b))]
    if dueling is None:
        return np.array(h)
    wv, bv, wa, ba = dueling
    v = sum(wv[0][j] * h[j] for j in range(len(h))) + bv[0]
    adv = [sum(wa[i][j] * h[j] for j in range(len(h))) + ba[i] for i in range(len(ba))]
    mean = sum(adv) / len(adv)
    return np.array([v + a - mean for a in adv])


def grid_value_iteration(rows, gamma, tol=1e-12):
    """Optimal state values for a deterministic FrozenLake-style grid.

    Entering G pays 1 and ends; entering H pays 0 and ends.
    Returns (values, greedy action per state) with actions LEFT, DOWN, RIGHT, UP.
    """
    h, w = len(rows), len(rows[0])
    cells = "".join(rows)
    moves = [(0, -1), (1, 0), (0, 1), (-1, 0)]

    def succ(s, a):
        r, c = divmod(s, w)
        r = min(max(r + moves[a][0], 0), h - 1)
        c = min(max(c + moves[a][1], 0), w - 1)
        return r * w + c

    v = np.zeros(h * w)
    while True:
        q = np.zeros((h * w, 4))
        for s in range(h * w):
            if cells[s] in "GH":
                continue
            for a in range(4):
                t = succ(s, a)
                if cells[t] == "G":
                    q[s, a] = 1.0
                elif cells[t] == "H":
                    q[s, a] = 0.0
                else:
                    q[s, a] = gamma * v[t]
        new = q.max(axis=1)
        if np.max(np.abs(new - v)) < tol:
            return new, q
        v = new


def grid_bfs_length(rows):
    h, w = len(rows), len(rows[0])
    cells = "".join(rows)
    start, goal = cells.index("S"), cells.index("G")
    dist = {start: 0}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        if s == goal:
            return dist[s]
        r, c = divmod(s, w)
        for dr, dc in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w:
                t = rr * w + cc
                if t not in dist and cells[t] != "H":
                    dist[t] = dist[s] + 1
                    queue.append(t)
    return None


def segment_hits_by_sampling(p, q, inside, n=20001):
    """Dense-sampling check whether segment p->q touches a region.

    ``inside`` maps an (n, 2) array of points to a boolean array.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return bool(np.any(inside(p + t * (q - p))))


def field_lattice_bfs(scenario, step=0.5, margin=0.3, samples=201):
    """Fewest king-move steps on a ``step``-spaced lattice from start to the goal disc.

    A move is allowed if densely sampled points along it keep more than
    ``margin`` from every obstacle. Returns None if the goal is unreachable.
    """
    x0, y0, x1, y1 = scenario.bounds
    start = np.asarray(scenario.start, dtype=float)
    goal = np.asarray(scenario.goal, dtype=float)

    def clearance(pts):
        d = np.full(len(pts), np.inf)
        for ob in scenario.obstacles:
            if hasattr(ob, "r"):
                d = np.minimum(d, np.hypot(pts[:, 0] - ob.cx, pts[:, 1] - ob.cy) - ob.r)
            else:
                dx = np.maximum(np.maximum(ob.x - pts[:, 0], 0), pts[:, 0] - ob.x - ob.w)
                dy = np.maximum(np.maximum(ob.y - pts[:, 1], 0), pts[:, 1] - ob.y - ob.h)
                d = np.minimum(d, np.hypot(dx, dy))
        return d

    t = np.linspace(0.0, 1.0, samples)[:, None]
    dist = {(0, 0): 0}
    queue = deque([(0, 0)])
    while queue:
        node = queue.popleft()
        p = start + step * np.array(node)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nxt = (node[0] + di, node[1] + dj)
                if nxt in dist or (di == 0 and dj == 0):
                    continue
                q = start + step * np.array(nxt)
                if not (x0 <= q[0] <= x1 and y0 <= q[1] <= y1):
                    continue
                if clearance(p + t * (q - p)).min() <= margin:
                    continue
                dist[nxt] = dist[node] + 1
                if np.hypot(*(q - goal)) <= scenario.goal_radius:
                    return dist[nxt]
                queue.append(nxt)
    return None
