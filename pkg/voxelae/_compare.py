#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.stats
import scipy.spatial

from voxelae._dataset import build_index
from voxelae._trainer import train

logger = logging.getLogger(__name__)


def compare_curve_metrics():
    return list(sorted(_compare_curves_metrics.keys()))


def compare_curves(observed, expected, metric):
    """ Compare two training-loss curves

    Parameters
    ----------
    observed: pd.Series
        Losses indexed by step.
    expected: pd.Series
        Losses indexed by step.
    metric: str
        The metric to use for comparing the curves.

    Returns
    -------
    pd.DataFrame
        One row of metric-dependent columns.

    See Also
    --------
    voxelae._compare.compare_curve_metrics

    """

    if metric not in _compare_curves_metrics:
        raise KeyError("%s is not a known metric. Known metrics are: %s."
                       % (metric, ', '.join(compare_curve_metrics())))
    else:
        metric_fn = _compare_curves_metrics[metric]

    _validate_curves(observed, expected)

    return metric_fn(observed.sort_index(), expected.sort_index())


def _validate_curves(observed, expected):
    """ Confirm both curves cover the same steps
    """
    if set(observed.index) != set(expected.index):
        raise ValueError('Steps in observed and expected curves must be '
                         'identical.')
    if len(observed) == 0:
        raise ValueError('Cannot compare empty curves.')


def _spearman(observed, expected):
    rho, p = scipy.stats.spearmanr(observed.values, expected.values)
    return pd.DataFrame([(rho, p)], columns=['Spearman rho', 'p'])


def _pearson(observed, expected):
    rho, p = scipy.stats.pearsonr(observed.values, expected.values)
    return pd.DataFrame([(rho, p)], columns=['Pearson r', 'p'])


def _euclidean(observed, expected):
    d = scipy.spatial.distance.euclidean(observed.values, expected.values)
    return pd.DataFrame([d], columns=['Euclidean distance'])


def _final_difference(observed, expected):
    return pd.DataFrame([observed.iloc[-1] - expected.iloc[-1]],
                        columns=['Final difference'])


_compare_curves_metrics = {'spearman': _spearman, 'pearson': _pearson,
                           'euclidean': _euclidean,
                           'final_difference': _final_difference}


@dataclass
class CompareReport:
    '''Paired outcome of two training runs.

    Attributes
    ----------
    labels : tuple of str
    steps : pd.DataFrame
        Train loss of both runs aligned on the step index, one column per
        label.
    wallclock : pd.DataFrame
        Long table with columns label, step, wall_seconds, mse.
    final : pd.DataFrame
        Per label: final eval MSE, parameter count and total training
        seconds.
    speedup : float
        Training seconds of the first run divided by those of the second.
    results : tuple of TrainResult
    '''
    labels: tuple
    steps: pd.DataFrame
    wallclock: pd.DataFrame
    final: pd.DataFrame
    speedup: float
    results: tuple

    def curve_metric(self, metric):
        a, b = self.labels
        aligned = self.steps.dropna()
        return compare_curves(aligned[a], aligned[b], metric)


def compare_labels(config_a, config_b):
    '''Default run labels: the model names, suffixed when they are equal.'''
    if config_a.model != config_b.model:
        return config_a.model, config_b.model
    return config_a.model + '_a', config_b.model + '_b'


def compare(config_a, config_b, labels=None, on_record=None):
    '''Train two configurations on the same data and pair their metrics.

    Both runs share one dataset index (built from `config_a`), so they see
    the same split and, for equal seeds, the same batch order.

    Parameters
    ----------
    config_a, config_b : TrainConfig
    labels : tuple of str, optional
        Defaults to the model names.
    on_record : callable, optional
        Called with (label, MetricsRecord) for every record.

    Returns
    -------
    CompareReport
    '''
    labels = tuple(labels or compare_labels(config_a, config_b))
    if len(set(labels)) != 2:
        raise ValueError('Compared runs need two distinct labels, got %s.'
                         % (labels,))
    index = build_index(config_a.data, config_a.test_fraction, config_a.seed)
    results = []
    for label, config in zip(labels, (config_a, config_b)):
        logger.info('Training %s.', label)
        callback = None
        if on_record is not None:
            def callback(record, label=label):
                on_record(label, record)
        results.append(train(config, on_record=callback, index=index))

    frames = []
    for label, result in zip(labels, results):
        m = result.metrics
        m = m[m['split'] == 'train']
        frames.append(m.assign(label=label))
    long = pd.concat(frames, ignore_index=True)
    steps = long.pivot(index='step', columns='label', values='mse')
    steps = steps[list(labels)]
    steps.columns.name = None
    wallclock = long[['label', 'step', 'wall_seconds', 'mse']]
    seconds = [float(np.sum(r.epoch_seconds)) for r in results]
    final = pd.DataFrame(
        {'final_eval_mse': [r.final_eval for r in results],
         'params': [r.model.count_params() for r in results],
         'train_seconds': seconds}, index=pd.Index(labels, name='label'))
    speedup = seconds[0] / seconds[1] if seconds[1] > 0 else float('nan')
    return CompareReport(labels, steps, wallclock, final, speedup,
                         tuple(results))
