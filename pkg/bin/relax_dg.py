#!/usr/bin/env python
"""relax-dg: relaxation Runge-Kutta experiments on entropy-stable DG discretizations"""

import argparse
import sys
import time
import warnings

from experiments import RunConfig, cmd_compare, cmd_convergence, cmd_gamma_history, cmd_run
from problems import problem_names
from tableaux import builtin_names
from utils import ConfigError, NumericalError, RelaxDGError, message, timestamp

__version__ = "1.0.0"


class relax_dg:
    def __init__(self, argv=None):
        argv = sys.argv[1:] if argv is None else list(argv)
        self.status = 0
        self.parser = argparse.ArgumentParser(
            description="relax-dg",
            usage="""relax-dg <subprogram> [options]

version=%s

Relaxation Runge-Kutta methods with local entropy inequalities

Commands:

    run             Integrate one problem and write solution, history and element files
    convergence     Mesh refinement study with a fixed CFL-like ratio
    gamma-history   Record the relaxation parameters of every step
    compare         Run with and without relaxation and compare the final densities

Problems:  %s
Tableaus:  %s
"""
            % (__version__, ", ".join(problem_names()), ", ".join(builtin_names())),
        )
        self.parser.add_argument("subprogram", help=argparse.SUPPRESS)

        if len(argv) < 1:
            self.parser.print_help()
            self.status = 2
            return

        commands = {
            "run": cmd_run,
            "convergence": None,
            "gamma-history": cmd_gamma_history,
            "compare": cmd_compare,
        }
        if argv[0] not in commands:
            self.parser.print_help()
            sys.stderr.write("\nUnknown subprogram '%s'\n" % argv[0])
            self.status = 2
            return

        self.subprogram = self.args_parser(argv[0])
        self.args = self.subprogram.parse_args(argv[1:])
        begin = time.time()

        try:
            config = self.build_config(self.args)
            message(config.verbose, 3, "relax-dg %s %s" % (argv[0], " ".join(argv[1:])))
            with warnings.catch_warnings():
                if config.verbose < 2:
                    warnings.simplefilter("ignore", RuntimeWarning)
                if argv[0] == "convergence":
                    cmd_convergence(config, self.args.N_list)
                else:
                    commands[argv[0]](config)
        except ConfigError as err:
            self.status = self.fail(err)
        except NumericalError as err:
            where = ""
            if hasattr(err, "last_step"):
                where = " (last accepted step %d at t = %.10g)" % (err.last_step, err.last_t)
            self.status = self.fail(err, where)
        except RelaxDGError as err:
            self.status = self.fail(err)
        except OSError as err:
            self.status = self.fail(err)
        else:
            message(config.verbose, 3, "Finished %s in %.2f s" % (argv[0], time.time() - begin))

    @staticmethod
    def fail(err, where=""):
        sys.stderr.write("%s ERROR: %s: %s%s\n" % (timestamp(), type(err).__name__, err, where))
        return getattr(err, "exit_code", ConfigError.exit_code)

    @staticmethod
    def build_config(args):
        config = RunConfig.from_sources(args.config, args.set or ())
        if args.outdir is not None:
            config.set("outdir", args.outdir)
        if args.threads is not None:
            config.set("relaxation.threads", args.threads)
        if args.verbose is not None:
            config.set("verbose", args.verbose)
        elif "verbose" not in config.explicit:
            config.set("verbose", 3)
        return config

    def args_parser(self, name):
        parser = argparse.ArgumentParser(
            prog="relax-dg %s" % name,
            description="relax-dg %s" % name,
        )
        io_options = parser.add_argument_group("Input/Output options")
        run_options = parser.add_argument_group("Run options")

        io_options.add_argument("--config", metavar="", default=None, help="JSON file with run settings")
        io_options.add_argument(
            "--set",
            metavar="key=value",
            action="append",
            help="Override one setting, value parsed as JSON (e.g. relaxation.mode=\"global\"). Repeatable",
        )
        io_options.add_argument("-o", "--outdir", metavar="", default=None, help="Output directory")

        run_options.add_argument(
            "-t", "--threads", metavar="", type=int, default=None, help="Threads for the per-element root solves"
        )
        run_options.add_argument(
            "-v",
            "--verbose",
            metavar="",
            type=int,
            default=None,
            help="Verbosity level, 1 errors, 2 warnings, 3 messages. Default: 3",
        )
        if name == "convergence":
            run_options.add_argument(
                "-N", "--N-list", metavar="", type=int, nargs="+", default=None, help="Element counts to run"
            )
        return parser


def main(argv=None):
    return relax_dg(argv).status


if __name__ == "__main__":
    sys.exit(main())
