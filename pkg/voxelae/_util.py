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
import os
import sys
import tempfile

import pandas as pd

METRICS_COLUMNS = ['step', 'epoch', 'split', 'mse', 'wall_seconds']


def configure_logging(level=None):
    '''Attach one stream handler to the `voxelae` logger.

    Parameters
    ----------
    level : str or int, optional
        Log level name or number. Defaults to the `VERBOSITY` environment
        variable, and to WARNING when that is unset.

    Returns
    -------
    logging.Logger
        The package logger.
    '''
    if level is None:
        level = os.environ.get('VERBOSITY', 'WARNING')
    if isinstance(level, str) and level.strip().isdigit():
        level = int(level)
    elif isinstance(level, str):
        level = level.strip().upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError('Unknown log level %r. Use DEBUG, INFO, WARNING, '
                             'ERROR or an integer.' % level)
    logger = logging.getLogger('voxelae')
    logger.setLevel(level)
    ours = [h for h in logger.handlers if getattr(h, '_voxelae', False)]
    if ours:
        # Track the current sys.stderr; the old stream may be closed.
        ours[0].stream = sys.stderr
    else:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(
            '%(asctime)s %(levelname)s %(name)s: %(message)s'))
        handler._voxelae = True
        logger.addHandler(handler)
    return logger


def atomic_write(path, data):
    '''Write `data` (bytes or str) to `path` through a renamed temp file.

    Readers never observe a partially written file.
    '''
    if isinstance(data, str):
        data = data.encode('utf-8')
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory,
                               prefix='.%s.' % os.path.basename(path),
                               suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def records_to_frame(records):
    '''Metrics records as a DataFrame with the CSV column order.'''
    rows = [r.to_dict() if hasattr(r, 'to_dict') else dict(r)
            for r in records]
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def write_metrics_csv(path, records):
    '''Write metrics records (or a DataFrame of them) atomically as CSV.'''
    frame = records if isinstance(records, pd.DataFrame) else \
        records_to_frame(records)
    atomic_write(path, frame[METRICS_COLUMNS].to_csv(index=False,
                                                     float_format='%.9g'))


def read_metrics_csv(path):
    '''Parse a metrics CSV written by `write_metrics_csv`.

    Raises
    ------
    ValueError
        If the header is not ``step,epoch,split,mse,wall_seconds``.
    '''
    frame = pd.read_csv(path, dtype={'split': str})
    if list(frame.columns) != METRICS_COLUMNS:
        raise ValueError('Metrics file %s has columns %s, expected %s.'
                         % (path, list(frame.columns), METRICS_COLUMNS))
    return frame
