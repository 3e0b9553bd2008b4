"""Second-order gradient boosted trees for an arbitrary per-row loss.

Numeric features are pre-binned into at most ``max_bins`` quantile bins
(one bin per distinct value when there are few of them); categorical
features use their integer codes directly. Trees grow leaf-wise, choosing
the split with the largest second-order gain, and leaves take the Newton
step ``-G / (H + lambda)``.
"""
from __future__ import annotations

import dataclasses
import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .losses import Loss

log = logging.getLogger(__name__)

MISSING_BIN = 255
N_HIST = 256
# a split must improve the node objective by more than this (relative)
_GAIN_RTOL = 1e-12
# boosting rounds must lower the training loss by more than this (relative)
_LOSS_RTOL = 1e-14


@dataclass(frozen=True)
class BoostConfig:
    num_trees: int = 200
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_leaf_count: int = 20
    min_leaf_hessian: float = 1e-3
    l2_leaf_reg: float = 1.0
    max_bins: int = 255
    early_stop_rounds: int | None = None
    validation_fraction: float = 0.0
    seed: int = 0
    n_threads: int = 1

    def __post_init__(self):
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_leaves < 1 or self.min_leaf_count < 1:
            raise ValueError("max_leaves and min_leaf_count must be >= 1")
        if self.min_leaf_hessian < 0 or self.l2_leaf_reg < 0:
            raise ValueError("min_leaf_hessian and l2_leaf_reg must be >= 0")
        if not (2 <= self.max_bins <= 255):
            raise ValueError("max_bins must lie in [2, 255]")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.early_stop_rounds is not None and self.early_stop_rounds < 1:
            raise ValueError("early_stop_rounds must be positive or None")
        if self.n_threads < 1:
            raise ValueError("n_threads must be >= 1")

    def replace(self, **changes) -> "BoostConfig":
        return dataclasses.replace(self, **changes)


class BinMapper:
    """Frozen per-feature bin edges; bin ``b`` holds ``cuts[b-1] < x <= cuts[b]``."""

    def __init__(self, max_bins=255):
        self.max_bins = max_bins
        self.cuts = []
        self.n_bins = None
        self.categorical = None

    def fit(self, X, categorical=None):
        X = np.asarray(X, dtype=float)
        p = X.shape[1]
        categorical = np.zeros(p, bool) if categorical is None else np.asarray(categorical, bool)
        self.categorical = categorical
        self.cuts = []
        n_bins = []
        for f in range(p):
            x = X[:, f]
            x = x[~np.isnan(x)]
            if categorical[f]:
                n_cat = int(x.max()) + 1 if x.size else 0
                if n_cat > self.max_bins:
                    raise ValueError(f"feature {f}: {n_cat} categories exceed max_bins={self.max_bins}")
                self.cuts.append(None)
                n_bins.append(max(n_cat, 1))
                continue
            uniq = np.unique(x)
            if uniq.size <= self.max_bins:
                cuts = uniq[:-1]
            else:
                qs = np.linspace(0.0, 1.0, self.max_bins + 1)[1:-1]
                cuts = np.unique(np.quantile(x, qs, method="inverted_cdf"))
                cuts = cuts[cuts < uniq[-1]]
            self.cuts.append(cuts)
            n_bins.append(cuts.size + 1)
        self.n_bins = np.asarray(n_bins, dtype=np.intp)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        codes = np.full(X.shape, MISSING_BIN, dtype=np.uint8)
        for f, cuts in enumerate(self.cuts):
            x = X[:, f]
            ok = ~np.isnan(x)
            if cuts is None:
                c = x[ok].astype(np.intp)
                c = np.where((c >= 0) & (c < self.n_bins[f]), c, MISSING_BIN)
            else:
                c = np.searchsorted(cuts, x[ok], side="left")
            codes[ok, f] = c
        return codes


@dataclass(frozen=True)
class BinnedData:
    """Raw features together with their bin codes."""

    X: np.ndarray
    codes: np.ndarray
    mapper: BinMapper

    @classmethod
    def from_array(cls, X, categorical=None, max_bins=255):
        X = np.ascontiguousarray(X, dtype=float)
        mapper = BinMapper(max_bins).fit(X, categorical)
        return cls(X, mapper.transform(X), mapper)

    def subset(self, rows):
        return BinnedData(self.X[rows], self.codes[rows], self.mapper)

    @property
    def n_rows(self):
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Binary tree in flat arrays; ``feature == -1`` marks a leaf.

    Numeric splits send ``x <= threshold`` left. Categorical splits list the
    category codes seen on each side; any other code follows the missing
    direction.
    """

    feature: np.ndarray
    threshold: np.ndarray
    is_categorical: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cat_left: tuple = ()
    cat_right: tuple = ()

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def scaled(self, factor):
        return dataclasses.replace(self, value=self.value * factor)

    def apply(self, X):
        """Leaf node index for every row of ``X``."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=np.intp)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            f = self.feature[node]
            if f < 0:
                out[idx] = node
                continue
            x = X[idx, f]
            if self.is_categorical[node]:
                go_left = np.isin(x, self.cat_left[node])
                other = ~(go_left | np.isin(x, self.cat_right[node]))
            else:
                go_left = x <= self.threshold[node]
                other = np.isnan(x)
            if self.missing_left[node]:
                go_left |= other
            stack.append((self.right[node], idx[~go_left]))
            stack.append((self.left[node], idx[go_left]))
        return out

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "is_categorical": self.is_categorical.tolist(),
            "missing_left": self.missing_left.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cat_left": [list(map(int, c)) for c in self.cat_left],
            "cat_right": [list(map(int, c)) for c in self.cat_right],
        }

    @classmethod
    def from_dict(cls, d):
        n = len(d["feature"])
        fields = ("feature", "threshold", "is_categorical", "missing_left", "left", "right", "value", "cat_left", "cat_right")
        if any(len(d[k]) != n for k in fields):
            raise ValueError("inconsistent tree arrays")
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray([np.nan if t is None else t for t in d["threshold"]], dtype=float),
            is_categorical=np.asarray(d["is_categorical"], dtype=bool),
            missing_left=np.asarray(d["missing_left"], dtype=bool),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            value=np.asarray(d["value"], dtype=float),
            cat_left=tuple(np.asarray(c, dtype=float) for c in d["cat_left"]),
            cat_right=tuple(np.asarray(c, dtype=float) for c in d["cat_right"]),
        )


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``F(x) = base_score + sum of tree outputs`` (leaf values already shrunk)."""

    base_score: float
    trees: tuple = ()
    n_features: int = 0
    categorical: tuple = ()

    @classmethod
    def constant(cls, value, n_features, categorical=None):
        cat = tuple(bool(c) for c in categorical) if categorical is not None else (False,) * n_features
        return cls(float(value), (), n_features, cat)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out[0] if single else out

    def extend(self, other: "Ensemble") -> "Ensemble":
        if other.n_features != self.n_features:
            raise ValueError("feature count mismatch")
        return dataclasses.replace(
            self, base_score=self.base_score + other.base_score, trees=self.trees + other.trees
        )

    def to_dict(self):
        return {
            "base_score": self.base_score,
            "n_features": self.n_features,
            "categorical": list(self.categorical),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            base_score=float(d["base_score"]),
            trees=tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            n_features=int(d["n_features"]),
            categorical=tuple(bool(c) for c in d["categorical"]),
        )


@dataclass
class BoostResult:
    ensemble: Ensemble
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    scores: np.ndarray | None = None  # training-row scores incl. offsets
    stopped_early: bool = False


def _as_row_array(a, n, default):
    if a is None:
        return np.full(n, default, dtype=float)
    a = np.asarray(a, dtype=float)
    return np.broadcast_to(a, (n,)).astype(float) if a.ndim == 0 else a


def init_constant(loss: Loss, target, weight=None, aux=None, offsets=None, max_iter=50, tol=1e-12):
    """``argmin_gamma sum L(target, offset + gamma)`` by damped Newton."""
    target = np.asarray(target, dtype=float)
    n = target.shape[0]
    weight = _as_row_array(weight, n, 1.0)
    offsets = _as_row_array(offsets, n, 0.0)
    if n == 0 or not weight.sum() > 0:
        raise ValueError("degenerate weighting: weights sum to zero")
    wsum = weight.sum()

    def total(gamma):
        v, g, h = loss.evaluate(target, offsets + gamma, weight, aux)
        return v.sum(), g.sum(), h.sum()

    gamma = 0.0
    val, g, h = total(gamma)
    for _ in range(max_iter):
        if abs(g) <= tol * wsum:
            break
        step = -g / h if h > 0 else -np.sign(g)
        if abs(step) <= 1e-15 * (1.0 + abs(gamma)):
            break
        if h > 0 and g * g / h <= 1e-10 * (abs(val) + wsum):
            # loss changes here are at rounding level; the quadratic model is exact enough
            new = gamma + step
            nval, ng, nh = total(new)
        else:
            for _ in range(60):
                new = gamma + step
                nval, ng, nh = total(new)
                if np.isfinite(nval) and nval <= val:
                    break
                step *= 0.5
            else:
                break
        if new == gamma:
            break
        gamma, val, g, h = new, nval, ng, nh
    return float(gamma)


def leaf_values(grad, hess, leaf_index, l2_leaf_reg, n_leaves=None):
    """Newton leaf values ``-sum(g) / (sum(h) + lambda)`` per region."""
    leaf_index = np.asarray(leaf_index, dtype=np.intp)
    n_leaves = int(leaf_index.max()) + 1 if n_leaves is None else n_leaves
    G = np.bincount(leaf_index, weights=grad, minlength=n_leaves)
    H = np.bincount(leaf_index, weights=hess, minlength=n_leaves)
    return -G / (H + l2_leaf_reg)


def _histogram(codes, g, h, pool):
    m, p = codes.shape

    def block(fs):
        sub = codes[:, fs].astype(np.intp) + (np.arange(len(fs)) * N_HIST)[None, :]
        flat = sub.ravel()
        k = len(fs) * N_HIST
        return (
            np.bincount(flat, weights=np.repeat(g, len(fs)), minlength=k).reshape(len(fs), N_HIST),
            np.bincount(flat, weights=np.repeat(h, len(fs)), minlength=k).reshape(len(fs), N_HIST),
            np.bincount(flat, minlength=k).reshape(len(fs), N_HIST),
        )

    if pool is None or p == 1:
        return block(list(range(p)))
    blocks = [list(b) for b in np.array_split(np.arange(p), min(p, pool._max_workers)) if len(b)]
    parts = list(pool.map(block, blocks))
    return tuple(np.concatenate([part[i] for part in parts]) for i in range(3))


@dataclass
class _Split:
    gain: float
    feature: int
    missing_left: bool
    bin_threshold: int = -1
    left_codes: tuple = ()
    right_codes: tuple = ()


class _TreeGrower:
    def __init__(self, binned: BinnedData, grad, hess, config: BoostConfig, pool=None):
        self.codes = binned.codes
        self.mapper = binned.mapper
        self.g = grad
        self.h = hess
        self.cfg = config
        self.lam = config.l2_leaf_reg
        self.pool = pool
        self.categorical = np.asarray(self.mapper.categorical, bool)
        nb = self.mapper.n_bins
        # thresholds t with t < n_bins - 1 are usable
        self.num_valid = np.arange(N_HIST - 1)[None, :] < (nb - 1)[:, None]

    def _score(self, G, H):
        return G * G / (H + self.lam) if H + self.lam > 0 else 0.0

    def _gain(self, GL, HL, GR, HR, parent):
        lam = self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)

    def _admissible(self, CL, HL, CR, HR):
        cfg = self.cfg
        return (CL >= cfg.min_leaf_count) & (CR >= cfg.min_leaf_count) & (HL >= cfg.min_leaf_hessian) & (HR >= cfg.min_leaf_hessian)

    def find_split(self, hist, G, H, C):
        Gh, Hh, Ch = hist
        parent = self._score(G, H)
        min_gain = _GAIN_RTOL * max(parent, 1e-300)
        best = None
        num = ~self.categorical
        num_best = {}
        if num.any():
            fs = np.flatnonzero(num)
            cg = np.cumsum(Gh[fs, :N_HIST - 1], axis=1)
            ch = np.cumsum(Hh[fs, :N_HIST - 1], axis=1)
            cc = np.cumsum(Ch[fs, :N_HIST - 1], axis=1)
            gm, hm, cm = Gh[fs, MISSING_BIN][:, None], Hh[fs, MISSING_BIN][:, None], Ch[fs, MISSING_BIN][:, None]
            gains = []
            for ml in (True, False):
                GL = cg + gm if ml else cg
                HL = ch + hm if ml else ch
                CL = cc + cm if ml else cc
                GR, HR, CR = G - GL, H - HL, C - CL
                ok = self._admissible(CL, HL, CR, HR) & self.num_valid[fs]
                gains.append(np.where(ok, self._gain(GL, HL, GR, HR, parent), -np.inf))
            # order (threshold, direction) so ties prefer lower bins, then missing-left
            both = np.stack(gains, axis=2).reshape(len(fs), -1)
            arg = np.argmax(both, axis=1)
            for k, f in enumerate(fs):
                num_best[f] = (both[k, arg[k]], arg[k] // 2, arg[k] % 2 == 0)
        for f in range(self.codes.shape[1]):
            if num[f]:
                gain, t, ml = num_best[f]
                cand = _Split(gain, f, bool(ml), bin_threshold=int(t)) if np.isfinite(gain) else None
            else:
                cand = self._categorical_split(f, Gh[f], Hh[f], Ch[f], G, H, C, parent)
            if cand is not None and cand.gain > min_gain and (best is None or cand.gain > best.gain):
                best = cand
        return best

    def _categorical_split(self, f, Gf, Hf, Cf, G, H, C, parent):
        k = int(self.mapper.n_bins[f])
        present = np.flatnonzero(Cf[:k] > 0)
        if present.size < 2:
            return None
        ratio = Gf[present] / np.maximum(Hf[present] + self.lam, 1e-300)
        order = present[np.argsort(ratio, kind="stable")]
        cg, ch, cc = np.cumsum(Gf[order])[:-1], np.cumsum(Hf[order])[:-1], np.cumsum(Cf[order])[:-1]
        gm, hm, cm = Gf[MISSING_BIN], Hf[MISSING_BIN], Cf[MISSING_BIN]
        best = None
        for ml in (True, False):
            GL, HL, CL = (cg + gm, ch + hm, cc + cm) if ml else (cg, ch, cc)
            GR, HR, CR = G - GL, H - HL, C - CL
            gains = np.where(self._admissible(CL, HL, CR, HR), self._gain(GL, HL, GR, HR, parent), -np.inf)
            i = int(np.argmax(gains))
            if np.isfinite(gains[i]) and (best is None or gains[i] > best.gain):
                best = _Split(
                    float(gains[i]), f, ml,
                    left_codes=tuple(sorted(int(c) for c in order[: i + 1])),
                    right_codes=tuple(sorted(int(c) for c in order[i + 1:])),
                )
        return best

    def _goes_left(self, rows, split):
        c = self.codes[rows, split.feature]
        if self.categorical[split.feature]:
            left = np.isin(c, np.asarray(split.left_codes, dtype=np.uint8))
        else:
            left = c <= split.bin_threshold
        miss = c == MISSING_BIN
        return np.where(miss, split.missing_left, left)

    def grow(self, rows):
        cfg = self.cfg
        nodes = []  # dicts; leaves keep their row arrays until finalised

        def new_node(node_rows, hist):
            G = float(np.sum(self.g[node_rows]))
            H = float(np.sum(self.h[node_rows]))
            node = {"rows": node_rows, "G": G, "H": H, "hist": hist, "split": None, "id": len(nodes)}
            nodes.append(node)
            if node_rows.size >= 2 * cfg.min_leaf_count:
                node["split"] = self.find_split(hist, G, H, node_rows.size)
            return node

        def hist_of(node_rows):
            return _histogram(self.codes[node_rows], self.g[node_rows], self.h[node_rows], self.pool)

        root = new_node(rows, hist_of(rows)) if cfg.max_leaves > 1 else self._leaf(nodes, rows)
        heap = []
        if root["split"] is not None:
            heapq.heappush(heap, (-root["split"].gain, root["id"]))
        n_leaves = 1
        children = {}
        while heap and n_leaves < cfg.max_leaves:
            _, nid = heapq.heappop(heap)
            node = nodes[nid]
            split = node["split"]
            r = node["rows"]
            mask = self._goes_left(r, split)
            lrows, rrows = r[mask], r[~mask]
            small, large = (lrows, rrows) if lrows.size <= rrows.size else (rrows, lrows)
            need_hist = n_leaves + 1 < cfg.max_leaves
            if need_hist:
                hs = hist_of(small)
                hl = tuple(p - s for p, s in zip(node["hist"], hs))
                hist_l, hist_r = (hs, hl) if small is lrows else (hl, hs)
            else:
                hist_l = hist_r = None
            node["hist"] = None
            if need_hist:
                lnode = new_node(lrows, hist_l)
                rnode = new_node(rrows, hist_r)
            else:
                lnode = self._leaf(nodes, lrows)
                rnode = self._leaf(nodes, rrows)
            children[nid] = (lnode["id"], rnode["id"])
            n_leaves += 1
            for child in (lnode, rnode):
                if child["split"] is not None:
                    heapq.heappush(heap, (-child["split"].gain, child["id"]))
        return self._finalise(nodes, children)

    def _leaf(self, nodes, rows):
        node = {"rows": rows, "G": float(np.sum(self.g[rows])), "H": float(np.sum(self.h[rows])),
                "hist": None, "split": None, "id": len(nodes)}
        nodes.append(node)
        return node

    def _finalise(self, nodes, children):
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.intp)
        threshold = np.full(n, np.nan)
        is_cat = np.zeros(n, bool)
        missing_left = np.zeros(n, bool)
        left = np.full(n, -1, dtype=np.intp)
        right = np.full(n, -1, dtype=np.intp)
        value = np.zeros(n)
        cat_left = [()] * n
        cat_right = [()] * n
        leaf_rows = {}
        for node in nodes:
            i = node["id"]
            if i in children:
                s = node["split"]
                feature[i] = s.feature
                missing_left[i] = s.missing_left
                left[i], right[i] = children[i]
                if self.categorical[s.feature]:
                    is_cat[i] = True
                    cat_left[i], cat_right[i] = s.left_codes, s.right_codes
                else:
                    threshold[i] = self.mapper.cuts[s.feature][s.bin_threshold]
            else:
                value[i] = -node["G"] / (node["H"] + self.lam) if node["H"] + self.lam > 0 else 0.0
                leaf_rows[i] = node["rows"]
        tree = DecisionTree(
            feature, threshold, is_cat, missing_left, left, right, value,
            tuple(np.asarray(c, dtype=float) for c in cat_left),
            tuple(np.asarray(c, dtype=float) for c in cat_right),
        )
        return tree, leaf_rows


def fit_tree(binned: BinnedData, grad, hess, config: BoostConfig, pool=None):
    """Grow one tree on the gradients/Hessians of all rows of ``binned``.

    Returns ``(tree, leaf_of_row)`` with unshrunk Newton leaf values.
    """
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise ValueError("non-finite gradient or Hessian")
    if np.any(hess < 0):
        raise ValueError("negative Hessian")
    grower = _TreeGrower(binned, grad, hess, config, pool)
    tree, leaf_rows = grower.grow(np.arange(binned.n_rows))
    leaf_of_row = np.empty(binned.n_rows, dtype=np.intp)
    for node, r in leaf_rows.items():
        leaf_of_row[r] = node
    return tree, leaf_of_row


def boost(loss: Loss, binned: BinnedData, target, weight=None, aux=None, offsets=None,
          config: BoostConfig = BoostConfig()) -> BoostResult:
    """Gradient boosting on top of fixed per-row ``offsets``.

    A round whose tree does not strictly lower the training loss is
    discarded and boosting stops, so the recorded training loss never
    increases.
    """
    n = binned.n_rows
    target = np.asarray(target, dtype=float)
    weight = _as_row_array(weight, n, 1.0)
    offsets = _as_row_array(offsets, n, 0.0)
    aux = None if aux is None else _as_row_array(aux, n, 0.0)
    if not np.all(np.isfinite(offsets)):
        raise ValueError("offsets must be finite")

    valid_rows = None
    train_rows = np.arange(n)
    if config.validation_fraction > 0 and config.early_stop_rounds:
        rng = np.random.default_rng(config.seed)
        n_val = int(round(config.validation_fraction * n))
        if 0 < n_val < n:
            valid_rows = np.sort(rng.choice(n, n_val, replace=False))
            train_rows = np.setdiff1d(np.arange(n), valid_rows)

    def sel(a, rows):
        return None if a is None else a[rows]

    t_target, t_weight, t_aux = target[train_rows], weight[train_rows], sel(aux, train_rows)
    t_binned = binned if valid_rows is None else binned.subset(train_rows)
    base = init_constant(loss, t_target, t_weight, t_aux, offsets[train_rows])
    score = offsets[train_rows] + base

    def total_loss(tg, s, wt, ax):
        return float(np.sum(loss.evaluate(tg, s, wt, ax)[0]))

    result = BoostResult(Ensemble.constant(base, binned.X.shape[1], binned.mapper.categorical))
    v, g, h = loss.evaluate(t_target, score, t_weight, t_aux)
    result.train_loss.append(float(np.sum(v)))
    if valid_rows is not None:
        v_score = offsets[valid_rows] + base
        v_args = (target[valid_rows], weight[valid_rows], sel(aux, valid_rows))
        result.valid_loss.append(total_loss(v_args[0], v_score, v_args[1], v_args[2]))
        best_iter, best_val = 0, result.valid_loss[0]

    trees = []
    pool = ThreadPoolExecutor(config.n_threads) if config.n_threads > 1 else None
    try:
        for m in range(config.num_trees):
            tree, leaf_of_row = fit_tree(t_binned, g, h, config, pool)
            tree = tree.scaled(config.learning_rate)
            new_score = score + tree.value[leaf_of_row]
            v, ng, nh = loss.evaluate(t_target, new_score, t_weight, t_aux)
            new_loss = float(np.sum(v))
            prev = result.train_loss[-1]
            if not (np.isfinite(new_loss) and new_loss < prev - _LOSS_RTOL * abs(prev)):
                result.stopped_early = True
                break
            trees.append(tree)
            score, g, h = new_score, ng, nh
            result.train_loss.append(new_loss)
            if valid_rows is not None:
                v_score = v_score + tree.predict(binned.X[valid_rows])
                vl = total_loss(v_args[0], v_score, v_args[1], v_args[2])
                result.valid_loss.append(vl)
                if vl < best_val:
                    best_iter, best_val = len(trees), vl
                elif len(trees) - best_iter >= config.early_stop_rounds:
                    result.stopped_early = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    if valid_rows is not None and len(trees) > best_iter:
        trees = trees[:best_iter]
        result.train_loss = result.train_loss[: best_iter + 1]
        score = None
    result.ensemble = dataclasses.replace(result.ensemble, trees=tuple(trees))
    if score is not None and valid_rows is None:
        result.scores = score
    return result


def fit_ensemble(loss: Loss, binned: BinnedData, target, weight=None, aux=None, offsets=None,
                 config: BoostConfig = BoostConfig()) -> Ensemble:
    return boost(loss, binned, target, weight, aux, offsets, config).ensemble


def predict(ensemble: Ensemble, X):
    return ensemble.predict(X)
