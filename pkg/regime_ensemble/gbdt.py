""" Gradient-boosted regression trees, one additive ensemble per forecast step.

Least-squares boosting with exact greedy split search over midpoints of
consecutive sorted feature values. With squared error the second-order
XGBoost objective reduces to residual fitting with an L2 leaf penalty, which
is kept here:

    gain = G_L^2 / (n_L + lambda) + G_R^2 / (n_R + lambda) - G^2 / (n + lambda)
    leaf = G / (n + lambda)

where G is the residual sum in a node. Ties in gain go to the lowest feature
index, then the lowest threshold.

"""
import logging
from multiprocessing.pool import ThreadPool

import numpy as np
from atom.api import Atom, Bool, Float, Int, List, Typed

from regime_ensemble.errors import ConfigurationError, InputError, ShapeError, TrainingError
from regime_ensemble.forecaster import Forecaster, register_forecaster
from regime_ensemble.model.base import Attributes

log = logging.getLogger(__name__)

LEAF = -1


class GbdtParams(Attributes):
    n_trees = Int(200)
    max_depth = Int(4)
    learning_rate = Float(0.1)
    min_samples_leaf = Int(5)
    lambda_l2 = Float(1.0)

    #: worker threads across forecast steps; results do not depend on it
    n_jobs = Int(1)

    #: feed only the exogenous window, not the power history
    exog_only = Bool(False)

    def validate(self):
        if self.n_trees < 1:
            raise ConfigurationError('n_trees', "must be at least 1")
        if self.max_depth < 1:
            raise ConfigurationError('max_depth', "must be at least 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigurationError('learning_rate', "must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ConfigurationError('min_samples_leaf', "must be at least 1")
        if self.lambda_l2 < 0:
            raise ConfigurationError('lambda_l2', "must be non-negative")
        if self.n_jobs < 1:
            raise ConfigurationError('n_jobs', "must be at least 1")
        return self


class RegressionTree(Atom):
    """ Binary regression tree stored as flat node arrays.

    Internal nodes send ``x[feature] <= threshold`` to ``left``; leaves have
    ``feature == -1`` and carry ``value``.

    """

    feature = Typed(np.ndarray)
    threshold = Typed(np.ndarray)
    left = Typed(np.ndarray)
    right = Typed(np.ndarray)
    value = Typed(np.ndarray)
    max_depth = Int()

    @property
    def n_nodes(self):
        return int(self.feature.shape[0])

    @property
    def n_leaves(self):
        return int(np.sum(self.feature == LEAF))

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """ Leaf index reached by every row of ``X``. """
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.max_depth + 1):
            feature = self.feature[node]
            active = feature != LEAF
            if not active.any():
                break
            rows = np.flatnonzero(active)
            go_left = X[rows, feature[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def serialize(self):
        return {'feature': self.feature.tolist(), 'threshold': self.threshold.tolist(),
                'left': self.left.tolist(), 'right': self.right.tolist(),
                'value': self.value.tolist(), 'max_depth': self.max_depth}

    @classmethod
    def from_archive(cls, archive):
        return cls(feature=np.asarray(archive['feature'], dtype=np.int64),
                   threshold=np.asarray(archive['threshold'], dtype=np.float64),
                   left=np.asarray(archive['left'], dtype=np.int64),
                   right=np.asarray(archive['right'], dtype=np.int64),
                   value=np.asarray(archive['value'], dtype=np.float64),
                   max_depth=int(archive['max_depth']))


def sort_columns(X):
    """ Per-feature row order and the matching sorted values, both (features, rows). """
    order = np.argsort(X, axis=0, kind='stable').T.copy()
    return order, np.take_along_axis(X, order.T, axis=0).T.copy()


def best_split(values, residual, min_samples_leaf, lambda_l2):
    """ Exact greedy search over all features of one node.

    ``values`` and ``residual`` are (features, members): the node's feature
    values and residuals with every row sorted by that feature.
    Returns (gain, feature, threshold) or None when no valid split improves.

    """
    d, m = values.shape
    if m < 2 * min_samples_leaf:
        return None
    candidates = values[:, :-1] < values[:, 1:]
    candidates[:, :min_samples_leaf - 1] = False
    candidates[:, m - min_samples_leaf:] = False
    # row-major, so the first maximum has the lowest feature then threshold
    feature, position = np.nonzero(candidates)
    if feature.size == 0:
        return None
    total = residual[0].sum()
    left_sum = np.cumsum(residual, axis=1)[feature, position]
    n_left = position + 1.0
    n_right = m - n_left
    gain = (left_sum ** 2 / (n_left + lambda_l2)
            + (total - left_sum) ** 2 / (n_right + lambda_l2)
            - total ** 2 / (m + lambda_l2))
    best = int(np.argmax(gain))
    if not gain[best] > 0:
        return None
    feature, position = int(feature[best]), int(position[best])
    lo, hi = values[feature, position], values[feature, position + 1]
    threshold = 0.5 * (lo + hi)
    if not threshold < hi:
        threshold = lo
    return gain[best], feature, threshold


def fit_tree(X, residual, max_depth, min_samples_leaf=1, lambda_l2=0.0, columns=None):
    """ Grow one least-squares regression tree on ``residual``.

    ``columns`` is the result of ``sort_columns(X)``; boosting passes it in
    so the sort happens once per fit.

    """
    order, values = sort_columns(X) if columns is None else columns
    features, thresholds, lefts, rights, values_out = [], [], [], [], []

    def new_node():
        features.append(LEAF)
        thresholds.append(0.0)
        lefts.append(LEAF)
        rights.append(LEAF)
        values_out.append(0.0)

    # breadth-first so node ids are stable and compact
    queue = [(order, values, residual[order], 0)]
    new_node()
    head = 0
    while head < len(queue):
        node_order, node_values, node_residual, depth = queue[head]
        node = head
        head += 1
        values_out[node] = node_residual[0].sum() / (node_order.shape[1] + lambda_l2)
        found = None
        if depth < max_depth:
            found = best_split(node_values, node_residual, min_samples_leaf, lambda_l2)
        if found is None:
            continue
        _, feature, threshold = found
        mask = (X[:, feature] <= threshold)[node_order]
        d, m = node_order.shape
        n_left = int(mask[0].sum())
        ids = []
        for side, width in ((mask, n_left), (~mask, m - n_left)):
            ids.append(len(queue))
            queue.append((node_order[side].reshape(d, width), node_values[side].reshape(d, width),
                          node_residual[side].reshape(d, width), depth + 1))
            new_node()
        features[node], thresholds[node] = feature, threshold
        lefts[node], rights[node] = ids
    return RegressionTree(feature=np.asarray(features, dtype=np.int64),
                          threshold=np.asarray(thresholds, dtype=np.float64),
                          left=np.asarray(lefts, dtype=np.int64),
                          right=np.asarray(rights, dtype=np.int64),
                          value=np.asarray(values_out, dtype=np.float64),
                          max_depth=max_depth)


@register_forecaster
class GbdtModel(Forecaster):
    """ Submodel (a): H independent boosted tree ensembles over the flattened window.

    The flattened input is the power window followed by the exogenous
    window, time-major; with ``exog_only`` the power window is left out.

    """

    kind = 'gbdt'

    params = Typed(GbdtParams, ())

    base_scores = Typed(np.ndarray)

    #: trees[h] is the ensemble for horizon step h + 1
    trees = List()

    #: per-horizon training MSE after each round
    loss_history = List()

    @property
    def learning_rate(self):
        return self.params.learning_rate

    @property
    def n_features(self):
        per_step = self.channels if self.params.exog_only else self.channels + 1
        return self.window * per_step

    def flatten(self, history, exog):
        history, exog = self._check_inputs(history, exog)
        flat = exog.reshape(exog.shape[0], -1)
        if not self.params.exog_only:
            flat = np.concatenate([history, flat], axis=1)
        return flat

    def fit(self, samples):
        params = self.params.validate()
        if len(samples) == 0:
            raise InputError("cannot fit gbdt on an empty sample set")
        self._adopt_layout(samples)
        X = self.flatten(samples.history, samples.exog)
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(samples.targets)):
            raise InputError("gbdt training data contains non-finite values")
        columns = sort_columns(X)

        def fit_step(h):
            return self._fit_step(X, samples.targets[:, h].copy(), columns, h)

        steps = range(self.horizon)
        if params.n_jobs > 1 and self.horizon > 1:
            with ThreadPool(min(params.n_jobs, self.horizon)) as pool:
                results = pool.map(fit_step, steps)
        else:
            results = [fit_step(h) for h in steps]
        self.base_scores = np.array([base for base, _, _ in results])
        self.trees = [trees for _, trees, _ in results]
        self.loss_history = [losses for _, _, losses in results]
        self.fitted = True
        log.info("fitted gbdt on %d samples x %d features", X.shape[0], X.shape[1])
        return self

    def _fit_step(self, X, y, columns, h):
        params = self.params
        base = y.mean()
        prediction = np.full(y.shape, base)
        losses = [float(np.mean((y - prediction) ** 2))]
        trees = []
        if np.ptp(y) > 0:
            for k in range(params.n_trees):
                tree = fit_tree(X, y - prediction, params.max_depth,
                                params.min_samples_leaf, params.lambda_l2, columns)
                if tree.n_nodes == 1:
                    break
                prediction = prediction + params.learning_rate * tree.predict(X)
                loss = float(np.mean((y - prediction) ** 2))
                if loss > losses[-1] * (1 + 1e-9) + 1e-15:
                    raise TrainingError("boosting loss increased at round %d of step %d" % (k, h + 1))
                losses.append(loss)
                trees.append(tree)
        log.debug("gbdt step %d: %d trees, train mse %.6g", h + 1, len(trees), losses[-1])
        return base, trees, losses

    def predict(self, history, exog, n_trees=None):
        X = self.flatten(history, exog)
        out = np.empty((X.shape[0], self.horizon))
        for h in range(self.horizon):
            prediction = np.full(X.shape[0], self.base_scores[h])
            for tree in self.trees[h][:n_trees]:
                prediction = prediction + self.learning_rate * tree.predict(X)
            out[:, h] = prediction
        return out

    def serialize(self, archive):
        archive.update(self.describe())
        archive['channels'] = self.channels
        archive['params'] = self.params.serialize({})
        archive['base_scores'] = self.base_scores.tolist()
        archive['trees'] = [[t.serialize() for t in step] for step in self.trees]
        return archive

    def deserialize(self, archive):
        self.window, self.horizon = archive['window'], archive['horizon']
        self.channels = archive['channels']
        self.params = GbdtParams.from_archive(archive['params'])
        self.base_scores = np.asarray(archive['base_scores'], dtype=np.float64)
        self.trees = [[RegressionTree.from_archive(t) for t in step] for step in archive['trees']]
        if len(self.trees) != self.horizon:
            raise ShapeError("gbdt archive holds %d tree lists for horizon %d" % (len(self.trees), self.horizon))
        self.fitted = True
        return self
