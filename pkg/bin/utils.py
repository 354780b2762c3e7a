import datetime
import errno
import os
import platform
import sys

import numba
import numpy as np
import pandas as pd
import scipy
import yaml

# verbosity levels shared by the library and the command line
ERROR = 1
WARNING = 2
MESSAGE = 3

# CSV float format: 17 significant digits round-trips any double
FLOAT_FORMAT = "%.16e"


class RelaxDGError(Exception):
    """Base class for every error raised by relaxation-dg"""

    exit_code = 1


class ConfigError(RelaxDGError):
    exit_code = 2


class UnknownNameError(ConfigError, KeyError):
    """Lookup of a registry name that does not exist"""

    def __init__(self, kind, name, valid):
        self.kind = kind
        self.name = name
        self.valid = sorted(valid)
        super().__init__("Unknown %s '%s'. Valid names: %s" % (kind, name, ", ".join(self.valid)))

    def __str__(self):
        return self.args[0]


class PartitionIndexError(ConfigError, IndexError):
    def __init__(self, kappa, n_partitions):
        self.kappa = kappa
        self.n_partitions = n_partitions
        super().__init__("Partition index %r out of range for %d partitions" % (kappa, n_partitions))


class NumericalError(RelaxDGError):
    exit_code = 3


class BlowupError(NumericalError):
    """Non-finite state or tendency"""

    def __init__(self, t, index, what="state"):
        self.t = t
        self.index = index
        super().__init__("Non-finite %s at t = %.10g (partition %s)" % (what, t, index))


class StateError(NumericalError):
    """Non-positive density or pressure"""

    def __init__(self, quantity, element=None, node=None, value=None):
        self.quantity = quantity
        self.element = element
        self.node = node
        self.value = value
        super().__init__("Non-positive %s = %r at element %s, node %s" % (quantity, value, element, node))


class BracketingError(NumericalError):
    def __init__(self, kappa, bracket, r_values):
        self.kappa = kappa
        self.bracket = tuple(bracket)
        self.r_values = tuple(r_values)
        super().__init__(
            "No sign change of the relaxation residual for partition %s on [%.6g, %.6g] (r = %.6g, %.6g)"
            % (kappa, bracket[0], bracket[1], r_values[0], r_values[1])
        )


class DegenerateRootError(NumericalError):
    def __init__(self, kappa, gamma, floor):
        self.kappa = kappa
        self.gamma = gamma
        super().__init__("Relaxation root %.6g of partition %s is at or below the floor %.3g" % (gamma, kappa, floor))


class EntropyViolationError(NumericalError):
    def __init__(self, kappa, excess):
        self.kappa = kappa
        self.excess = excess
        super().__init__("Local entropy inequality violated in partition %s by %.6g" % (kappa, excess))


class StepLimitError(NumericalError):
    def __init__(self, max_steps, t):
        self.max_steps = max_steps
        self.t = t
        super().__init__("Step limit of %d reached at t = %.10g" % (max_steps, t))


def timestamp():
    return datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S:")


def message(verbose, level, *args):
    """Print a timestamped message when the verbosity level allows it"""
    if verbose >= level:
        print(timestamp(), *args)
        sys.stdout.flush()


def make_dir(path):
    if len(path) > 0:
        try:
            os.makedirs(path)
        except OSError as exception:
            if exception.errno != errno.EEXIST:
                raise exception


def write_csv(df, path):
    """Write a table with fixed scientific formatting, LF line endings and a header row.

    Missing values (e.g. undefined convergence rates) are written as blank fields."""
    make_dir(os.path.dirname(path))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    return path


def read_csv(path):
    return pd.read_csv(path, float_precision="round_trip", keep_default_na=True)


def software_versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "numba": numba.__version__,
        "yaml": yaml.__version__,
    }


def write_run_record(outdir, config_dict):
    """Dump the resolved configuration and the software versions next to the results"""
    make_dir(outdir)
    with open(os.path.join(outdir, "run_config.yml"), "w") as f:
        yaml.safe_dump(config_dict, f, default_flow_style=False, sort_keys=True)
    with open(os.path.join(outdir, "versions.yml"), "w") as f:
        yaml.safe_dump({"relaxation-dg": software_versions()}, f, default_flow_style=False)
