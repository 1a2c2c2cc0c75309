#!/usr/bin/env python
# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------

from ._tensor import Tensor, ShapeError, backward, no_grad
from ._optim import AdamState, adam_step
from ._stl import TriangleMesh, STLParseError, parse_stl, write_stl
from ._voxelize import VoxelGrid, voxelize
from ._binvox import BinvoxFormatError, read_binvox, write_binvox
from ._dataset import (DataError, DatasetIndex, build_index, load_batch,
                       make_primitive_corpus, voxelize_file)
from ._blocks import (BlockSpec, count_params, mbconv3d_forward,
                      mbconvtranspose3d_forward, squeeze_excite)
from ._models import (Model, ModelSpec, ClassifierHead, build_baseline,
                      build_residual, shape_trace)
from ._checkpoint import (Checkpoint, CheckpointError, export_encoder,
                          import_encoder, load_checkpoint, save_checkpoint)
from ._trainer import (MetricsRecord, NonFiniteLossError, TrainConfig,
                       TrainResult, evaluate, train)
from ._compare import compare, compare_curves, compare_curve_metrics
from ._plot import plot_loss_curves


__version__ = '0.1.0-dev'

__all__ = ['Tensor', 'ShapeError', 'backward', 'no_grad', 'AdamState',
           'adam_step', 'TriangleMesh', 'STLParseError', 'parse_stl',
           'write_stl', 'VoxelGrid', 'voxelize', 'BinvoxFormatError',
           'read_binvox', 'write_binvox', 'DataError', 'DatasetIndex',
           'build_index', 'load_batch', 'make_primitive_corpus',
           'voxelize_file', 'BlockSpec', 'count_params', 'mbconv3d_forward',
           'mbconvtranspose3d_forward', 'squeeze_excite', 'Model',
           'ModelSpec', 'ClassifierHead', 'build_baseline', 'build_residual',
           'shape_trace', 'Checkpoint', 'CheckpointError', 'export_encoder',
           'import_encoder', 'load_checkpoint', 'save_checkpoint',
           'MetricsRecord', 'NonFiniteLossError', 'TrainConfig',
           'TrainResult', 'evaluate', 'train', 'compare', 'compare_curves',
           'compare_curve_metrics', 'plot_loss_curves']
