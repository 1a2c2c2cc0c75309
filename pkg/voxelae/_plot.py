#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
# www.biota.com
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

import matplotlib
matplotlib.use('Agg')
import seaborn as sns  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402


def plot_loss_curves(wallclock, x='step', title='Batch loss (MSE)'):
    '''Line plot of the train loss of compared runs.

    Parameters
    ----------
    wallclock : pd.DataFrame
        Long table with columns label, step, wall_seconds and mse, as in
        `CompareReport.wallclock`.
    x : str
        'step' or 'wall_seconds'.
    '''
    if x not in ('step', 'wall_seconds'):
        raise ValueError("x must be 'step' or 'wall_seconds', got %r." % x)
    fig = plt.figure()
    ax = fig.add_subplot(1, 1, 1)
    sns.lineplot(data=wallclock, x=x, y='mse', hue='label', ax=ax)
    ax.set_xlabel('Training steps' if x == 'step' else 'Training time (s)')
    ax.set_ylabel('MSE')
    ax.set_title(title)
    return fig, ax
