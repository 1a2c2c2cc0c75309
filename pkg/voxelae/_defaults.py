# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
# Configuration file where you can set the parameter default values and
# descriptions.
DEFAULT_DIM = 64
DEFAULT_LATENT = 256
DEFAULT_BATCH = 64
DEFAULT_LR = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8
DEFAULT_EPOCHS = 6
DEFAULT_SEED = 0
DEFAULT_EVAL_EVERY = 100
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_THRESHOLD = 0.5
DEFAULT_JOBS = 1
DEFAULT_MARGIN = 0
DEFAULT_PREFETCH = 2
DEFAULT_MODEL = 'residual'
DEFAULT_PRESET = 'default'

DEFAULT_EXPAND = 4
DEFAULT_SE_RATIO = 0.25
DEFAULT_KERNEL = 3
DEFAULT_DROPOUT = 0.2
DEFAULT_BN_MOMENTUM = 0.1
DEFAULT_BN_EPS = 1e-5

DEFAULT_CORPUS_COUNT = 100

# Exit codes of the command line interface.
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DESC_IN_MESH = ('Path to an STL/binvox file, or a directory that is scanned '
                'recursively for *.stl and *.binvox files.')
DESC_OUT_DIR = 'Path to the output directory (created if missing).'
DESC_DIM = 'Edge resolution of the cubic voxel grid.'
DESC_JOBS = 'Number of processes to launch.'
DESC_MARGIN = ('Empty voxels kept on every side of a voxelized mesh. 0 lets '
               'the mesh bounding box span the whole grid.')
DESC_MODEL = ('Autoencoder to train: `baseline` is the conventional '
              'convolutional encoder/transposed-convolution decoder, '
              '`residual` the inverted-bottleneck (MBConv3D / '
              'MBConvTranspose3D) autoencoder.')
DESC_PRESET = ('Width preset of the residual autoencoder. Ignored for the '
               'baseline.')
DESC_DATA = ('Dataset root, scanned recursively for *.binvox and *.stl '
             'files.')
DESC_EPOCHS = ('Number of passes over the training split. Each epoch uses a '
               'fresh shuffle derived from the run seed.')
DESC_BATCH = 'Number of voxel grids per optimization step.'
DESC_LR = 'Learning rate of the Adam optimizer.'
DESC_SEED = ('Seed for weight initialization, dataset split, data order and '
             'dropout masks.')
DESC_EVAL_EVERY = ('Evaluate the test split in eval mode every this many '
                   'optimization steps.')
DESC_MAX_STEPS = ('Stop after this many optimization steps, even if the '
                  'requested epochs are not complete. 0 means no cap.')
DESC_EVAL_SAMPLES = ('Evaluate at most this many test grids per evaluation '
                     'pass. 0 evaluates the whole split.')
DESC_TEST_FRACTION = 'Fraction of the dataset held out as the test split.'
DESC_DETERMINISM = ('Force single-producer data loading so that two runs '
                    'with the same seed emit identical metric streams.')
DESC_RESUME = 'Checkpoint to resume training from.'
DESC_CKPT = 'Path to a checkpoint written by `voxelae train`.'
DESC_IN_GRIDS = 'One or more binvox files.'
DESC_OUT_CSV = 'Path to the CSV file to write.'
DESC_OUT_BINVOX = 'Path to the binvox file to write.'
DESC_THRESHOLD = ('Occupancy probability above which a reconstructed voxel '
                  'is set.')
DESC_COUNT = 'Number of synthetic meshes to generate.'
DESC_SPEC = 'Name of a built-in model (`baseline` or `residual`).'
