"""Kinodynamic RRT trees with best-control extension and RRT-connect rounds.

Forward trees are rooted at a counterexample and integrate the plain
dynamics; backward trees are rooted at demonstration knots and integrate the
time-reversed dynamics xdot = -F(x, u), so a reconstructed backward path
runs forward in time into its demonstration.  Node selection uses a weighted
Euclidean metric, optionally augmented with the history term that penalizes
nodes whose extensions kept failing.
"""

from dataclasses import dataclass

import numpy as np

from .collocation import DemoSeed
from .dynamics import rk4_step


@dataclass(frozen=True)
class MetricSpec:
    """Diagonal weights of the distance metric plus the history-bias flag."""

    weights: np.ndarray
    history_bias: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)) or np.all(w <= 0):
            raise ValueError("metric weights must be finite with at least one positive")


def eta(ms, x, y):
    """Weighted Euclidean distance; broadcasts over leading axes."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.sqrt(np.sum(ms.weights * diff * diff, axis=-1))


class RrtTree:
    """Indexed node storage (states, parent links, applied actions, failure
    counters).  `reverse_time` marks backward trees.  Roots carry parent -1;
    backward trees may have several roots, one per demonstration knot, whose
    knot indices live in `root_meta`."""

    def __init__(self, sys, metric, reverse_time=False, max_nodes=5000):
        self.sys = sys
        self.metric = metric
        self.reverse_time = reverse_time
        self.max_nodes = int(max_nodes)
        n, m = sys.state_dim, sys.input_dim
        cap = 256
        self._states = np.empty((cap, n))
        self._actions = np.zeros((cap, m))
        self.parents = np.full(cap, -1, dtype=np.int64)
        self.fails = np.zeros(cap, dtype=np.int64)
        self.depth = np.zeros(cap, dtype=np.int64)
        self.n_nodes = 0
        self.root_meta = {}

    def __len__(self):
        return self.n_nodes

    @property
    def states(self):
        return self._states[: self.n_nodes]

    @property
    def actions(self):
        return self._actions[: self.n_nodes]

    def _grow_buffers(self):
        cap = len(self.parents) * 2
        for name in ("_states", "_actions"):
            buf = getattr(self, name)
            new = np.empty((cap,) + buf.shape[1:])
            new[: self.n_nodes] = buf[: self.n_nodes]
            setattr(self, name, new)
        for name in ("parents", "fails", "depth"):
            buf = getattr(self, name)
            new = np.zeros(cap, dtype=np.int64)
            if name == "parents":
                new.fill(-1)
            new[: self.n_nodes] = buf[: self.n_nodes]
            setattr(self, name, new)

    def add_root(self, state, knot=None):
        idx = self._append(state, -1, None)
        if knot is not None:
            self.root_meta[idx] = int(knot)
        return idx

    def add_node(self, state, parent, action):
        return self._append(state, parent, action)

    def _append(self, state, parent, action):
        if self.n_nodes == len(self.parents):
            self._grow_buffers()
        i = self.n_nodes
        self._states[i] = state
        self.parents[i] = parent
        if action is not None:
            self._actions[i] = action
        self.depth[i] = 0 if parent < 0 else self.depth[parent] + 1
        self.n_nodes += 1
        return i

    def step(self, x, u, dt):
        """One integration step in this tree's time direction, batch-aware."""
        if self.reverse_time:
            rev = _Reversed(self.sys)
            return rk4_step(rev, x, u, dt)
        return rk4_step(self.sys, x, u, dt)

    def root_of(self, idx):
        while self.parents[idx] >= 0:
            idx = self.parents[idx]
        return int(idx)


class _Reversed:
    def __init__(self, sys):
        self._sys = sys

    def rhs(self, x, u):
        return -self._sys.rhs(x, u)


def select_nearest(tree, x_rand):
    """Node index minimizing the metric to x_rand; with history bias, the
    normalized-distance-plus-normalized-failures score instead.  Degenerate
    normalizations (all nodes equidistant, or all failure counts equal) zero
    out the corresponding term.  Ties resolve to the smallest index."""
    dists = eta(tree.metric, tree.states, x_rand)
    if not tree.metric.history_bias:
        return int(np.argmin(dists))
    d_min, d_max = float(dists.min()), float(dists.max())
    fails = tree.fails[: tree.n_nodes]
    n_min, n_max = int(fails.min()), int(fails.max())
    score = np.zeros(tree.n_nodes)
    if d_max > d_min:
        score += (dists - d_min) / (d_max - d_min)
    if n_max > n_min:
        score += (fails - n_min) / (n_max - n_min)
    return int(np.argmin(score))


def best_control(tree, actions, p, target, spec):
    """Best action from state p toward target in the tree's time direction:
    enumerate the discrete action set, integrate one step, discard steps
    that hit an obstacle or leave the demonstration state bounds (trees
    exist to seed demonstrations, so they explore where demonstrations may
    live), and return the feasible (action index, new state) nearest to the
    target (smallest index wins ties).  None when every action is
    infeasible."""
    K = len(actions)
    P = np.broadcast_to(p, (K, len(p)))
    nxt = tree.step(P, actions, spec.step)
    ok = spec.demo_state_box.contains(nxt) & spec.obstacle_free(nxt)
    if not np.any(ok):
        return None
    dists = eta(tree.metric, nxt, target)
    dists = np.where(ok, dists, np.inf)
    j = int(np.argmin(dists))
    return j, nxt[j]


def grow(tree, from_idx, q, spec, max_extensions=500):
    """Greedy chain extension from a node toward q: keep applying the best
    control while the metric distance to q strictly decreases.  Increments
    the node's failure count when the very first extension fails.  Returns
    the list of appended node indices."""
    actions = spec.actions
    new_idx = []
    p_idx = from_idx
    p = tree.states[from_idx]
    d_cur = float(eta(tree.metric, p, q))
    while len(new_idx) < max_extensions and tree.n_nodes < tree.max_nodes:
        pick = best_control(tree, actions, p, q, spec)
        if pick is None:
            break
        j, p_new = pick
        d_new = float(eta(tree.metric, p_new, q))
        if not d_new < d_cur:
            break
        p_idx = tree.add_node(p_new, p_idx, actions[j])
        new_idx.append(p_idx)
        p, d_cur = p_new, d_new
    if not new_idx:
        tree.fails[from_idx] += 1
    return new_idx


def connect_round(primary, secondary, spec, rng, retry_cap=200, max_extensions=500):
    """One bidirectional round: sample random states until the primary tree
    expands, then grow the secondary toward the last new primary node.
    Returns (primary_new, secondary_new) node index lists; both empty when
    the retry cap runs out (a no-op round).  The caller swaps the roles."""
    box = spec.demo_state_box
    new_p = []
    for _ in range(retry_cap):
        if primary.n_nodes >= primary.max_nodes:
            break
        x_rand = box.lo + (box.hi - box.lo) * rng.random(box.dim)
        i_near = select_nearest(primary, x_rand)
        new_p = grow(primary, i_near, x_rand, spec, max_extensions)
        if new_p:
            break
    if not new_p:
        return [], []
    x_last = primary.states[new_p[-1]]
    j_near = select_nearest(secondary, x_last)
    new_s = grow(secondary, j_near, x_last, spec, max_extensions)
    return new_p, new_s


def reconstruct_path(tree, node_idx, spec):
    """Forward-executable seed for the tree path through node_idx.

    Forward tree: the root-to-node chain with its stored actions.  Backward
    tree: the node-to-root chain, actions re-timed for forward integration
    and the states regenerated by one forward RK4 sweep (the backward RK4
    steps are not exact inverses of forward ones), so the seed re-integrates
    exactly.  Returns (DemoSeed, root_index).
    """
    chain = [int(node_idx)]
    while tree.parents[chain[-1]] >= 0:
        chain.append(int(tree.parents[chain[-1]]))
    root = chain[-1]
    m = tree.sys.input_dim
    if not tree.reverse_time:
        chain = chain[::-1]  # root ... node
        states = tree.states[chain].copy()
        inputs = np.zeros((len(chain), m))
        if len(chain) > 1:
            inputs[:-1] = tree.actions[chain[1:]]
            inputs[-1] = inputs[-2]
        return DemoSeed(states, inputs, "counterexample_path"), root
    # backward tree: forward order is node -> ... -> root
    states = tree.states[chain].copy()
    inputs = np.zeros((len(chain), m))
    if len(chain) > 1:
        # action stored on child c moves (in forward time) from c to parent
        inputs[:-1] = tree.actions[chain[:-1]]
        inputs[-1] = inputs[-2]
        for i in range(len(chain) - 1):
            states[i + 1] = rk4_step(tree.sys, states[i], inputs[i], spec.step)
    return DemoSeed(states, inputs, "demo_tree_path"), root


def tree_to_dict(tree):
    """JSON-ready dict of the tree (states, parents, actions, fail counts)."""
    return {
        "direction": "backward" if tree.reverse_time else "forward",
        "nodes": [
            {
                "state": tree.states[i].tolist(),
                "parent": int(tree.parents[i]),
                "action": tree.actions[i].tolist() if tree.parents[i] >= 0 else None,
                "fails": int(tree.fails[i]),
            }
            for i in range(tree.n_nodes)
        ],
        "root_knots": {str(k): v for k, v in tree.root_meta.items()},
    }
