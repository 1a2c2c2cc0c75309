# ----------------------------------------------------------------------------
# Copyright (c) 2016--, Biota Technology.
#
# Distributed under the terms of the Modified BSD License.
#
# The full license is in the file LICENSE, distributed with this software.
# ----------------------------------------------------------------------------
from importlib import import_module
import sys

import click

from voxelae import __version__
from voxelae._binvox import BinvoxFormatError
from voxelae._checkpoint import CheckpointError
from voxelae._dataset import DataError
from voxelae._defaults import EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC
from voxelae._stl import STLParseError
from voxelae._trainer import NonFiniteLossError
from voxelae._util import configure_logging

# Exceptions reported as data errors rather than tracebacks.
_DATA_ERRORS = (DataError, STLParseError, BinvoxFormatError, CheckpointError,
                OSError)


class _ExitCodes(object):
    '''Map failures to exit codes: usage 1, data 2, non-finite loss 3.

    Data errors subclass `ValueError`, so they are matched first and any
    other `ValueError` counts as a usage error.
    '''

    def main(self, args=None, prog_name=None, complete_var=None,
             standalone_mode=True, **extra):
        try:
            return super(_ExitCodes, self).main(
                args, prog_name, complete_var, standalone_mode=False,
                **extra)
        except click.UsageError as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo('Aborted!', err=True)
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(e.exit_code)
        except NonFiniteLossError as e:
            click.echo('Error: %s' % e, err=True)
            sys.exit(EXIT_NUMERIC)
        except _DATA_ERRORS as e:
            click.echo('Error: %s' % e, err=True)
            sys.exit(EXIT_DATA)
        except ValueError as e:
            # option values click accepted but the library rejects
            click.echo('Error: %s' % e, err=True)
            sys.exit(EXIT_USAGE)


class VoxelaeCommand(_ExitCodes, click.Command):
    pass


class VoxelaeGroup(_ExitCodes, click.Group):
    command_class = VoxelaeCommand


@click.group(cls=VoxelaeGroup)
@click.version_option(__version__)
def cli():
    configure_logging()


import_module('voxelae._cli.voxelize')
import_module('voxelae._cli.train')
import_module('voxelae._cli.encode')
