# This file is part of ocrsmech.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""Command line front end of the ocrsmech tasks.

Every subcommand builds the config of one task, loads an optional pex_config
override file (``--config``), applies the explicit flags on top of it and
runs the task.  The exit status is 0 when every pass flag of the run holds,
1 when a statistical check fails and 2 when the run could not be completed.
"""

import argparse
import json
import logging
import sys

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.logging import VERBOSE, getLogger

from .errors import (DimensionMismatchError, IterationLimitError, KeepCoinPreconditionError,
                     LpInfeasibleError, LpUnboundedError, ProcessInfeasibleError, TooLargeError,
                     UnsupportedConstraintError, ValidationFailedError)
from .instances import instanceToDict, writeInstance
from .interimLp import writeInterimRule
from .ocrsBernoulliBench import FACTORIES, BernoulliBenchTask
from .ocrsGenerateInstance import INSTANCE_FAMILIES, GenerateInstanceTask
from .ocrsRunMechanism import RunMechanismTask
from .ocrsRunProcurement import RunProcurementTask
from .ocrsRunScheme import RunSchemeTask
from .ocrsSolveLp import SolveInterimLpTask
from .ocrsVerify import EXPERIMENTS, RECORD_FIELDS, VerifyTask
from .reports import REPORT_FORMATS, cleanValue, emitReport, exitCode

__all__ = ["EXIT_PASSED", "EXIT_FAILED", "EXIT_ERROR", "makeParser", "buildConfig", "main"]

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

# failures reported as one fatal line rather than a traceback
_RUN_ERRORS = (pipeBase.TaskError, pexConfig.FieldValidationError, DimensionMismatchError,
               UnsupportedConstraintError, ProcessInfeasibleError, LpInfeasibleError, LpUnboundedError,
               IterationLimitError, ValidationFailedError, TooLargeError, KeepCoinPreconditionError,
               OSError)

_log = getLogger("ocrsmech.cli")

SCHEME_NAMES = ("auto", "alwaysSelect", "vh", "knapsack", "multiChoiceKnapsack", "stochasticKnapsack")
KEEP_MODES = ("knownProbability", "exactBernoulli", "estimated")


def _addSchemeFlags(parser, prefix):
    parser.add_argument("--scheme", dest="%sscheme" % (prefix), choices=SCHEME_NAMES,
                        help="Online scheme")
    parser.add_argument("-b", dest="%sb" % (prefix), type=float, help="Activation scale b in (0, 1]")
    parser.add_argument("--mode", dest="%smode" % (prefix), choices=("oracle", "estimated"),
                        help="Exact or estimated branch probabilities")
    parser.add_argument("--scheme-epsilon", dest="%sepsilon" % (prefix), type=float,
                        help="Estimation accuracy of the scheme")
    parser.add_argument("--scheme-delta", dest="%sdelta" % (prefix), type=float,
                        help="Estimation failure probability of the scheme")


def _addInputFlags(parser, interim=True):
    parser.add_argument("--instance", dest="instanceFile", help="Instance JSON file")
    if interim:
        parser.add_argument("--interim", dest="interimFile",
                            help="Interim rule JSON file (solved from the instance when omitted)")


def makeParser():
    """Argument parser with one subcommand per task."""
    parser = argparse.ArgumentParser(prog="ocrsmech.py",
                                     description="Online contention resolution schemes and mechanisms")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--trials", type=int, help="Number of Monte Carlo trials")
    parser.add_argument("--chunk-size", dest="chunkSize", type=int, help="Trials per vectorised chunk")
    parser.add_argument("--cores", dest="nCore", type=int, help="Worker threads")
    parser.add_argument("--config", dest="configFile",
                        help="pex_config override file; explicit flags take precedence")
    parser.add_argument("--out", help="Output file (standard output when omitted)")
    parser.add_argument("--format", choices=REPORT_FORMATS, help="Report format")
    parser.add_argument("--log-level", dest="logLevel", default="INFO",
                        choices=("DEBUG", "VERBOSE", "INFO", "WARNING", "ERROR"), help="Log level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen", help="Generate a random instance")
    gen.add_argument("--family", dest="generator.family", choices=INSTANCE_FAMILIES)
    gen.add_argument("--agents", dest="generator.nAgents", type=int)
    gen.add_argument("--items", dest="generator.nItems", type=int)
    gen.add_argument("--types", dest="generator.nTypes", type=int)
    gen.add_argument("--capacity", dest="generator.capacity", type=float)
    gen.add_argument("--budget", dest="generator.budget", type=float)

    solve = subparsers.add_parser("solve-lp", help="Solve the interim relaxation of an instance")
    _addInputFlags(solve, interim=False)
    solve.add_argument("--oracle", dest="doOracle", action="store_true", default=None,
                       help="Also compute the brute-force optimal revenue")

    scheme = subparsers.add_parser("run-scheme", help="Measure the selectability of a scheme")
    _addInputFlags(scheme)
    _addSchemeFlags(scheme, "scheme.")

    mech = subparsers.add_parser("run-mech", help="Simulate the auction mechanism")
    _addInputFlags(mech)
    _addSchemeFlags(mech, "mechanism.scheme.")
    mech.add_argument("--epsilon", dest="mechanism.epsilon", type=float, help="Keep-target slack")
    mech.add_argument("--keep-mode", dest="mechanism.keepMode", choices=KEEP_MODES)
    mech.add_argument("--batch", dest="sequential", action="store_false", default=None,
                      help="Run the batch mechanism instead of the online one")
    mech.add_argument("--bic-audit", dest="doBicAudit", action="store_true", default=None)

    proc = subparsers.add_parser("run-procurement", help="Simulate the procurement auction")
    _addInputFlags(proc)
    _addSchemeFlags(proc, "mechanism.scheme.")
    proc.add_argument("--epsilon", dest="mechanism.epsilon", type=float, help="Keep-target slack")
    proc.add_argument("--keep-mode", dest="mechanism.keepMode", choices=KEEP_MODES)
    proc.add_argument("--seller-audit", dest="doBicAudit", action="store_true", default=None)

    verify = subparsers.add_parser("verify", help="Run the acceptance experiments")
    verify.add_argument("--experiments", nargs="+", choices=EXPERIMENTS)
    verify.add_argument("--instances", dest="nInstances", type=int, help="Instances per experiment")

    bench = subparsers.add_parser("bernoulli-bench", help="Benchmark the Bernoulli factories")
    bench.add_argument("--factories", nargs="+", choices=FACTORIES)
    bench.add_argument("--p0", dest="p0List", nargs="+", type=float)
    bench.add_argument("--p1", dest="p1List", nargs="+", type=float)
    return parser


_COMMANDS = {
    "gen": GenerateInstanceTask,
    "solve-lp": SolveInterimLpTask,
    "run-scheme": RunSchemeTask,
    "run-mech": RunMechanismTask,
    "run-procurement": RunProcurementTask,
    "verify": VerifyTask,
    "bernoulli-bench": BernoulliBenchTask,
}

_GLOBAL_FLAGS = ("command", "configFile", "out", "format", "logLevel")


def buildConfig(taskClass, args):
    """Config of ``taskClass``: defaults, then ``--config``, then flags.

    Flags left unset on the command line (`None`) do not override.
    """
    config = taskClass.ConfigClass()
    if args.configFile:
        config.load(args.configFile)
    for dotted, value in sorted(vars(args).items()):
        if dotted in _GLOBAL_FLAGS or value is None:
            continue
        *path, name = dotted.split(".")
        target = config
        for part in path:
            target = getattr(target, part)
        setattr(target, name, value)
    config.validate()
    return config


def _writeJson(data, path):
    text = json.dumps(cleanValue(data), indent=2, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _summaryDict(struct, skip=()):
    return {key: value for key, value in struct.getDict().items() if key not in skip}


def _elementRecords(rates, expected=None):
    records = []
    for i, row in enumerate(rates):
        for j, rate in enumerate(row):
            record = {"agent": i, "item": j, "rate": float(rate)}
            if expected is not None:
                record["expected"] = float(expected[i][j])
            records.append(record)
    return records


def _runCommand(command, task, args):
    """Run the task and write its output; returns the exit status."""
    format = args.format or "json"
    if command == "gen":
        instance = task.run().instance
        if args.out:
            writeInstance(instance, args.out)
        else:
            _writeJson(instanceToDict(instance), None)
        return EXIT_PASSED

    if command == "solve-lp":
        result = task.run()
        if args.out:
            writeInterimRule(result.rule, args.out)
        else:
            _writeJson(result.rule.toDict(), None)
        if result.oracle is not None:
            _log.info("LP objective %.12g, optimal revenue %.12g", result.objective, result.oracle.revenue)
        return EXIT_PASSED

    if command == "run-scheme":
        result = task.run()
        summary = _summaryDict(result.report, skip=("records", "rates", "activeCounts", "typeRates"))
        emitReport(result.report.records, format=format, path=args.out, summary=summary)
        return exitCode(passed=result.passed)

    if command in ("run-mech", "run-procurement"):
        result = task.run()
        summary = _summaryDict(result.summary, skip=("traces", ))
        if command == "run-mech":
            records = _elementRecords(result.summary.allocationRates, result.summary.expectedAllocationRates)
        else:
            records = _elementRecords(result.summary.procurementRates)
        if result.audit is not None:
            summary["auditViolations"] = len(result.audit.violations)
            records = result.audit.records
        summary["passed"] = result.passed
        emitReport(records, format=format, path=args.out, summary=summary)
        return exitCode(passed=result.passed)

    result = task.run()
    fields = RECORD_FIELDS if command == "verify" else None
    emitReport(result.records, format=args.format or "csv", path=args.out, fields=fields)
    return exitCode(result.records, passed=result.passed)


def main(argv=None):
    """Parse ``argv``, run one subcommand and return the exit status."""
    args = makeParser().parse_args(argv)
    logging.basicConfig(level=VERBOSE if args.logLevel == "VERBOSE" else getattr(logging, args.logLevel),
                        format="%(name)s %(levelname)s: %(message)s", stream=sys.stderr)
    taskClass = _COMMANDS[args.command]
    try:
        config = buildConfig(taskClass, args)
        task = taskClass(config=config)
        status = _runCommand(args.command, task, args)
    except _RUN_ERRORS as e:
        _log.fatal("%s failed: %s", args.command, e)
        return EXIT_ERROR
    if status != EXIT_PASSED:
        _log.warning("%s: some checks failed", args.command)
    return status
