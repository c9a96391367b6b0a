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
"""Statistical acceptance experiments for the whole pipeline.

Each experiment draws its instances and trials from streams keyed on the
task seed, the experiment's position in ``config.experiments`` and the
instance index, so an experiment list plus a seed reproduces every number.
All experiments emit flat records with the fields of `RECORD_FIELDS`.
"""

import numpy as np

import lsst.pex.config as pexConfig
import lsst.pipe.base as pipeBase
from lsst.utils.timer import timeMethod

from .bruteForceOracle import bruteForceOptimalRevenue
from .constraints import SliceConstraint, VerticalHorizontal
from .errors import TooLargeError
from .instances import ProcurementInstance
from .knapsackSchemes import KnapsackTocrs
from .mechanism import ESTIMATION_STREAM, Mechanism, MechanismConfig, bicAudit
from .ocrsBernoulliBench import BernoulliBenchConfig, BernoulliBenchTask
from .ocrsGenerateInstance import InstanceGeneratorConfig, generateInstance
from .ocrsRunMechanism import mechanismCounts, summarizeMechanism
from .ocrsRunProcurement import procurementCounts, summarizeProcurement
from .ocrsRunScheme import MIN_ACTIVE_SAMPLES, verifySelectability
from .ocrsSolveLp import SolveInterimLpTask
from .ocrsTaskBase import OcrsBaseTask, OcrsTaskConfigBase
from .procurement import ProcurementMechanism
from .schemeFactory import SchemeConfig, makeScheme
from .stochasticKnapsack import deterministicKnapsackOcrs
from .utilities import SIGMA_MARGIN, deriveSeed, makeRng, passesEquality, runChunks, sumChunkResults
from .vhSchemes import vhSchemeFromConstraint

__all__ = ["EXPERIMENTS", "RECORD_FIELDS", "LP_TOLERANCE", "ExperimentSpec", "VerifyConfig", "VerifyTask",
           "verifyEndToEnd", "makeRecord"]

EXPERIMENTS = {
    "knapsackSelectability": "Knapsack scheme rates against 1/(2+8b) on LP1 processes",
    "multiChoiceSelectability": "Multiple-choice knapsack rates and heavy-branch frequency",
    "estimatedDegradation": "Estimated-mode knapsack rates and their gap to the exact scheme",
    "stochasticKnapsack": "Stochastic knapsack rates for k* in {0.2, 0.5, 0.9}",
    "vhComposition": "Composed VH rate against the product of its row and column rates",
    "bernoulliDivision": "Bias, tosses and round law of the division factory",
    "lpOracle": "LP1 objective against the brute-force optimal revenue",
    "endToEnd": "Revenue identity and ratio to the optimum of the full pipeline",
    "bicAudit": "Truthful against misreported utilities",
    "procurement": "Budget feasibility and buyer value of the procurement auction",
}

RECORD_FIELDS = ("experiment", "case", "metric", "value", "bound", "passed")

LP_TOLERANCE = 1e-7

STOCHASTIC_KSTARS = (0.2, 0.5, 0.9)
STOCHASTIC_ELEMENTS = 6

# sub-stream of the verification experiments under the task seed
VERIFY_STREAM = 4


def makeRecord(experiment, case, metric, value, bound, passed):
    """One flat verification record."""
    return dict(zip(RECORD_FIELDS, (experiment, str(case), metric, None if value is None else float(value),
                                    None if bound is None else float(bound), bool(passed))))


class ExperimentSpec(pexConfig.Config):
    """One end-to-end experiment: instance family, pipeline and tolerances.

    The pipeline follows the instance: auctions go through LP1, a grid scheme
    and the auction mechanism; procurement instances through LP2, the
    stochastic knapsack scheme and the procurement auction.
    """
    experimentId = pexConfig.Field(
        doc="Name of the experiment in reports",
        dtype=str,
        default="endToEnd",
    )
    generator = pexConfig.ConfigField(
        dtype=InstanceGeneratorConfig,
        doc="Instance generator parameters",
    )
    mechanism = pexConfig.ConfigField(
        dtype=MechanismConfig,
        doc="Scheme and keep-flip settings",
    )
    sequential = pexConfig.Field(
        doc="Run the online mechanism rather than the batch one",
        dtype=bool,
        default=True,
    )
    doOracle = pexConfig.Field(
        doc="Compare with the brute-force optimal revenue when it is small enough",
        dtype=bool,
        default=True,
    )
    nSigma = pexConfig.RangeField(
        doc="Sigma margin of the statistical checks",
        dtype=float,
        default=SIGMA_MARGIN,
        min=0.0,
    )

    def setDefaults(self):
        super().setDefaults()
        self.generator.nAgents = 2
        self.generator.nItems = 2
        self.generator.nTypes = 2
        self.mechanism.epsilon = 0.0


def verifyEndToEnd(instance, rule, mechanismConfig, trials, seed, sequential=True, doOracle=True,
                   simplexConfig=None, chunkSize=4096, nCore=1, nSigma=SIGMA_MARGIN):
    """Run the full pipeline on one instance and compare with the optimum.

    Parameters
    ----------
    instance : `ocrsmech.instances.AuctionInstance` or
               `ocrsmech.instances.ProcurementInstance`
    rule : `ocrsmech.interimLp.InterimRule`
        Solution of the instance's interim relaxation.
    mechanismConfig : `ocrsmech.mechanism.MechanismConfig`
    trials, seed : `int`
    sequential : `bool`, optional
        Online (True) or batch auction mechanism.
    doOracle : `bool`, optional
        Compute the brute-force optimal revenue of auctions; a
        `~ocrsmech.errors.TooLargeError` is reported, not raised.
    simplexConfig : `ocrsmech.simplex.SimplexConfig`, optional
    chunkSize, nCore : `int`, optional
    nSigma : `float`, optional

    Returns
    -------
    report : `lsst.pipe.base.Struct`
        ``lpObjective``, ``oracleRevenue`` (`None` when not computed),
        ``oracleSkipped`` (reason or `None`), ``empirical`` (mean revenue
        or buyer value), ``sigma``, ``achievedRatio`` (against the optimum
        when known, else the LP), ``guaranteeRatio``, ``summary`` and
        ``passed``.
    """
    oracleRevenue = None
    oracleSkipped = None
    if isinstance(instance, ProcurementInstance):
        mechanism = ProcurementMechanism(mechanismConfig, instance, rule, seed=seed).prepare()

        def _chunk(index, nLanes, rng):
            return procurementCounts(mechanism, nLanes, rng)

        totals = sumChunkResults(runChunks(_chunk, seed, trials, chunkSize, nCore=nCore))
        summary = summarizeProcurement(totals, mechanism, nSigma=nSigma)
        empirical, sigma = summary.meanValue, summary.valueSigma
        guarantee = mechanism.keepTarget
        oracleSkipped = "procurement"
        passed = summary.passed
    else:
        mechanism = Mechanism(mechanismConfig, instance, rule, seed=seed).prepare()

        def _chunk(index, nLanes, rng):
            return mechanismCounts(mechanism, nLanes, rng, sequential=sequential)

        totals = sumChunkResults(runChunks(_chunk, seed, trials, chunkSize, nCore=nCore))
        summary = summarizeMechanism(totals, mechanism, nSigma=nSigma)
        empirical, sigma = summary.meanRevenue, summary.revenueSigma
        guarantee = mechanism.b*mechanism.keepTarget
        passed = summary.passed
        if doOracle:
            try:
                oracleRevenue = bruteForceOptimalRevenue(instance, simplexConfig=simplexConfig).revenue
            except TooLargeError as e:
                oracleSkipped = str(e)
        else:
            oracleSkipped = "disabled"
        if oracleRevenue is not None:
            passed = passed and empirical >= guarantee*oracleRevenue - nSigma*sigma - LP_TOLERANCE

    reference = oracleRevenue if oracleRevenue is not None else rule.objective
    achieved = empirical/reference if reference > 0.0 else float("nan")
    return pipeBase.Struct(lpObjective=float(rule.objective),
                           oracleRevenue=oracleRevenue,
                           oracleSkipped=oracleSkipped,
                           empirical=float(empirical),
                           sigma=float(sigma),
                           achievedRatio=float(achieved),
                           guaranteeRatio=float(guarantee),
                           summary=summary,
                           passed=bool(passed))


class VerifyConfig(OcrsTaskConfigBase):
    """Config for VerifyTask"""
    experiments = pexConfig.ListField(
        doc="Experiments to run; choose from %s" % (", ".join(EXPERIMENTS)),
        dtype=str,
        default=list(EXPERIMENTS),
    )
    nInstances = pexConfig.RangeField(
        doc="Random instances of each experiment except lpOracle",
        dtype=int,
        default=3,
        min=1,
    )
    oracleInstances = pexConfig.RangeField(
        doc="Random instances of each half of the lpOracle experiment",
        dtype=int,
        default=3,
        min=1,
    )
    generator = pexConfig.ConfigField(
        dtype=InstanceGeneratorConfig,
        doc="Template of the tiny instances used by the oracle and audit experiments",
    )
    gridAgents = pexConfig.RangeField(
        doc="Agents of the selectability experiments",
        dtype=int,
        default=4,
        min=1,
    )
    gridItems = pexConfig.RangeField(
        doc="Items of the selectability experiments",
        dtype=int,
        default=3,
        min=1,
    )
    gridTypes = pexConfig.RangeField(
        doc="Types per agent of the selectability experiments",
        dtype=int,
        default=3,
        min=1,
    )
    scheme = pexConfig.ConfigField(
        dtype=SchemeConfig,
        doc="Scheme of the selectability experiments",
    )
    estimatedEpsilon = pexConfig.RangeField(
        doc="Estimation accuracy of the estimatedDegradation experiment",
        dtype=float,
        default=0.05,
        min=0.0,
        max=1.0,
        inclusiveMin=False,
        inclusiveMax=False,
    )
    estimatedDelta = pexConfig.RangeField(
        doc="Estimation failure probability of the estimatedDegradation experiment",
        dtype=float,
        default=0.01,
        min=0.0,
        max=1.0,
        inclusiveMin=False,
        inclusiveMax=False,
    )
    endToEnd = pexConfig.ConfigField(
        dtype=ExperimentSpec,
        doc="Auction pipeline of the endToEnd and bicAudit experiments",
    )
    procurement = pexConfig.ConfigField(
        dtype=ExperimentSpec,
        doc="Pipeline of the procurement experiment",
    )
    bernoulli = pexConfig.ConfigField(
        dtype=BernoulliBenchConfig,
        doc="Division factory cases; its trials set the samples per case",
    )
    auditRuns = pexConfig.RangeField(
        doc="Runs per (agent, report) pair in the bicAudit experiment",
        dtype=int,
        default=20000,
        min=2,
    )
    minActiveSamples = pexConfig.RangeField(
        doc="Active samples an element needs before its rate is checked",
        dtype=int,
        default=MIN_ACTIVE_SAMPLES,
        min=1,
    )
    nSigma = pexConfig.RangeField(
        doc="Binomial sigma margin of the selectability checks",
        dtype=float,
        default=SIGMA_MARGIN,
        min=0.0,
    )
    solveLp = pexConfig.ConfigurableField(
        target=SolveInterimLpTask,
        doc="Task solving the interim relaxations",
    )

    def setDefaults(self):
        super().setDefaults()
        self.trials = 50000
        self.generator.nAgents = 2
        self.generator.nItems = 2
        self.generator.nTypes = 2
        self.procurement.experimentId = "procurement"
        self.procurement.generator.family = "procurement"
        self.procurement.generator.nAgents = 3
        self.procurement.generator.nItems = 1
        self.procurement.mechanism.epsilon = 0.01
        self.procurement.mechanism.scheme.scheme = "stochasticKnapsack"
        self.bernoulli.factories = ["divide"]
        self.bernoulli.trials = 20000

    def validate(self):
        super().validate()

        for name in self.experiments:
            if name not in EXPERIMENTS:
                msg = "Unknown experiment %r" % (name, )
                raise pexConfig.FieldValidationError(VerifyConfig.experiments, self, msg)
        if self.procurement.generator.family != "procurement":
            msg = "the procurement experiment needs the procurement family"
            raise pexConfig.FieldValidationError(VerifyConfig.procurement, self, msg)
        if self.endToEnd.generator.family == "procurement":
            msg = "the endToEnd experiment runs auctions; use the procurement experiment instead"
            raise pexConfig.FieldValidationError(VerifyConfig.endToEnd, self, msg)


class VerifyTask(OcrsBaseTask):
    """Run the configured acceptance experiments.

    Every experiment appends records to one flat list; the task passes when
    every record passes.
    """
    ConfigClass = VerifyConfig
    _DefaultName = "verify"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("solveLp")

    @timeMethod
    def run(self):
        """Run every experiment of ``config.experiments``.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            ``records`` (`list` [`dict`]) and ``passed``.
        """
        records = []
        for index, name in enumerate(self.config.experiments):
            self.log.info("Running experiment %s", name)
            found = getattr(self, "_%s" % (name))(index)
            failed = sum(not r["passed"] for r in found)
            self.log.info("Experiment %s: %d records, %d failed", name, len(found), failed)
            records.extend(found)
        passed = all(r["passed"] for r in records)
        return pipeBase.Struct(records=records, passed=passed)

    def _rng(self, index, k, *keys):
        return makeRng(self.config.seed, VERIFY_STREAM, index, k, *keys)

    def _seed(self, index, k, *keys):
        return deriveSeed(self.config.seed, VERIFY_STREAM, index, k, *keys)

    def _generatorConfig(self, template=None, **overrides):
        config = InstanceGeneratorConfig()
        config.update(**(template or self.config.generator).toDict())
        config.update(**overrides)
        return config

    def _gridGenerator(self, family, **overrides):
        return self._generatorConfig(family=family, nAgents=self.config.gridAgents,
                                     nItems=self.config.gridItems, nTypes=self.config.gridTypes, **overrides)

    def _selectability(self, scheme, index, k, constraint=None):
        return verifySelectability(scheme, self.config.trials, self._seed(index, k), constraint=constraint,
                                   chunkSize=self.config.chunkSize, nCore=self.config.nCore,
                                   minActiveSamples=self.config.minActiveSamples, nSigma=self.config.nSigma)

    def _gridSchemes(self, name, index, family, schemeConfigs):
        """Yield (k, instance, schemes) over the experiment's instances.

        Instances whose exact programs are too large are reported and skipped.
        """
        generator = self._gridGenerator(family)
        for k in range(self.config.nInstances):
            instance = generateInstance(generator, self._rng(index, k))
            rule = self.solveLp.run(instance).rule
            process = rule.process(instance)
            try:
                schemes = [makeScheme(config, instance.constraint, process,
                                      rng=self._rng(index, k, ESTIMATION_STREAM))
                           for config in schemeConfigs]
            except TooLargeError as e:
                self.log.warning("%s instance %d skipped: %s", name, k, e)
                yield k, instance, None
                continue
            yield k, instance, schemes

    def _rateRecords(self, name, case, report):
        return [makeRecord(name, case, "minRate", report.minRate, report.declaredC, report.passed),
                makeRecord(name, case, "violations", report.violations, 0, report.violations == 0)]

    def _knapsackSelectability(self, index):
        name = "knapsackSelectability"
        records = []
        for k, instance, schemes in self._gridSchemes(name, index, "knapsack", [self.config.scheme]):
            if schemes is None:
                records.append(makeRecord(name, k, "skipped", None, None, True))
                continue
            report = self._selectability(schemes[0], index, k, constraint=instance.constraint)
            records.extend(self._rateRecords(name, k, report))
            if self.config.scheme.mode == "oracle":
                exact = KnapsackTocrs.exactC(self.config.scheme.b)
                records.append(makeRecord(name, k, "declaredC", report.declaredC, exact,
                                          abs(report.declaredC - exact) <= 1e-12))
        return records

    def _multiChoiceSelectability(self, index):
        name = "multiChoiceSelectability"
        records = []
        schemeConfigs = [self.config.scheme]
        for k, instance, schemes in self._gridSchemes(name, index, "multiChoiceKnapsack", schemeConfigs):
            if schemes is None:
                records.append(makeRecord(name, k, "skipped", None, None, True))
                continue
            report = self._selectability(schemes[0], index, k, constraint=instance.constraint)
            records.extend(self._rateRecords(name, k, report))
            heavyTarget = schemes[0].heavyBranchProbability
            heavyOk = passesEquality(report.heavyFraction, heavyTarget, report.nTrials,
                                     nSigma=self.config.nSigma)
            records.append(makeRecord(name, k, "heavyFraction", report.heavyFraction, heavyTarget, heavyOk))
        return records

    def _estimatedDegradation(self, index):
        name = "estimatedDegradation"
        records = []
        estimated = SchemeConfig()
        estimated.update(**self.config.scheme.toDict())
        estimated.update(mode="estimated", epsilon=self.config.estimatedEpsilon,
                         delta=self.config.estimatedDelta)
        exact = SchemeConfig()
        exact.update(**self.config.scheme.toDict())
        exact.update(mode="oracle")
        for k, instance, schemes in self._gridSchemes(name, index, "knapsack", [exact, estimated]):
            if schemes is None:
                records.append(makeRecord(name, k, "skipped", None, None, True))
                continue
            exactReport = self._selectability(schemes[0], index, k, constraint=instance.constraint)
            estimatedReport = self._selectability(schemes[1], index, k, constraint=instance.constraint)
            records.extend(self._rateRecords(name, k, estimatedReport))

            checked = ((exactReport.activeCounts >= self.config.minActiveSamples)
                       & (estimatedReport.activeCounts >= self.config.minActiveSamples))
            gap = np.abs(exactReport.rates - estimatedReport.rates)
            sigma = np.hypot(_empiricalSigma(exactReport), _empiricalSigma(estimatedReport))
            allowed = self.config.estimatedEpsilon + self.config.nSigma*sigma
            worst = float(gap[checked].max()) if checked.any() else 0.0
            records.append(makeRecord(name, k, "maxRateGap", worst, self.config.estimatedEpsilon,
                                      bool(np.all(gap[checked] <= allowed[checked]))))
        return records

    def _stochasticKnapsack(self, index):
        name = "stochasticKnapsack"
        records = []
        for k, kStar in enumerate(STOCHASTIC_KSTARS):
            activeProb = min(1.0, 1.0/(STOCHASTIC_ELEMENTS*kStar))
            scheme = deterministicKnapsackOcrs([kStar]*STOCHASTIC_ELEMENTS, [activeProb]*STOCHASTIC_ELEMENTS,
                                               1.0)
            gamma = (1.0 - kStar)/(2.0 - kStar)
            expected = gamma if gamma >= 1.0/6.0 else 1.0/6.0
            report = self._selectability(scheme, index, k)
            case = "kStar=%g" % (kStar)
            records.extend(self._rateRecords(name, case, report))
            records.append(makeRecord(name, case, "declaredC", scheme.declaredC, expected,
                                      abs(scheme.declaredC - expected) <= 1e-12))
        return records

    def _vhComposition(self, index):
        name = "vhComposition"
        records = []
        generator = self._gridGenerator("vh", kPerAgent=2, kPerItem=1)
        b = self.config.scheme.b
        for k in range(self.config.nInstances):
            instance = generateInstance(generator, self._rng(index, k))
            process = self.solveLp.run(instance).rule.process(instance)
            constraint = instance.constraint
            n, m = constraint.shape
            rowsOnly = VerticalHorizontal(constraint.rowConstraints,
                                          [SliceConstraint("uniform", n, k=n) for _ in range(m)])
            columnsOnly = VerticalHorizontal([SliceConstraint("uniform", m, k=m) for _ in range(n)],
                                             constraint.columnConstraints)
            reports = [verifySelectability(vhSchemeFromConstraint(c, process, b), self.config.trials,
                                           self._seed(index, k, part), constraint=c,
                                           chunkSize=self.config.chunkSize, nCore=self.config.nCore,
                                           minActiveSamples=self.config.minActiveSamples,
                                           nSigma=self.config.nSigma)
                       for part, c in enumerate((constraint, rowsOnly, columnsOnly))]
            composed, rows, columns = reports
            records.extend(self._rateRecords(name, k, composed))

            checked = ((composed.activeCounts >= self.config.minActiveSamples)
                       & (rows.activeCounts >= self.config.minActiveSamples)
                       & (columns.activeCounts >= self.config.minActiveSamples))
            product = rows.rates*columns.rates
            sigma = np.sqrt(_empiricalSigma(composed)**2 + (columns.rates*_empiricalSigma(rows))**2
                            + (rows.rates*_empiricalSigma(columns))**2)
            deviation = np.abs(composed.rates - product)
            worst = float(deviation[checked].max()) if checked.any() else 0.0
            ok = bool(np.all(deviation[checked] <= self.config.nSigma*sigma[checked] + 1e-12))
            records.append(makeRecord(name, k, "maxProductDeviation", worst, 0.0, ok))
        return records

    def _bernoulliDivision(self, index):
        name = "bernoulliDivision"
        config = BernoulliBenchConfig()
        config.update(**self.config.bernoulli.toDict())
        config.update(seed=self._seed(index, 0) % (2**31), chunkSize=self.config.chunkSize,
                      nCore=self.config.nCore)
        result = BernoulliBenchTask(config=config).run()
        records = []
        for record in result.records:
            case = "%s(%g, %g)" % (record["factory"], record["p0"], record["p1"])
            records.append(makeRecord(name, case, "bias", record["bias"], record["target"],
                                      record["biasPassed"]))
            records.append(makeRecord(name, case, "meanTosses", record["meanTosses"], record["tossBound"],
                                      record["tossesPassed"]))
            if "roundLawPassed" in record:
                records.append(makeRecord(name, case, "roundLaw", None, None, record["roundLawPassed"]))
        return records

    def _lpOracle(self, index):
        name = "lpOracle"
        records = []
        families = ("singleCopy", "kUniform", "knapsack", "multiChoiceKnapsack")
        for k in range(self.config.oracleInstances):
            family = families[k % len(families)]
            generator = self._generatorConfig(family=family)
            instance = generateInstance(generator, self._rng(index, k))
            lp = self.solveLp.run(instance).objective
            try:
                opt = bruteForceOptimalRevenue(instance, simplexConfig=self.solveLp.config.simplex).revenue
            except TooLargeError as e:
                self.log.warning("%s instance %d skipped: %s", name, k, e)
                records.append(makeRecord(name, k, "skipped", None, None, True))
                continue
            records.append(makeRecord(name, "%d/%s" % (k, family), "lpMinusOpt", lp - opt, -LP_TOLERANCE,
                                      lp - opt >= -LP_TOLERANCE))

        # with one agent and an integral row polytope the relaxation is exact
        for k in range(self.config.oracleInstances):
            family = ("singleCopy", "kUniform")[k % 2]
            generator = self._generatorConfig(family=family, nAgents=1)
            instance = generateInstance(generator, self._rng(index, self.config.oracleInstances + k))
            lp = self.solveLp.run(instance).objective
            opt = bruteForceOptimalRevenue(instance, simplexConfig=self.solveLp.config.simplex).revenue
            records.append(makeRecord(name, "single%d/%s" % (k, family), "lpMinusOpt", lp - opt, LP_TOLERANCE,
                                      abs(lp - opt) <= LP_TOLERANCE))
        return records

    def _endToEnd(self, index):
        setup = self.config.endToEnd
        records = []
        for k in range(self.config.nInstances):
            instance = generateInstance(setup.generator, self._rng(index, k))
            rule = self.solveLp.run(instance).rule
            report = verifyEndToEnd(instance, rule, setup.mechanism, self.config.trials, self._seed(index, k),
                                    sequential=setup.sequential, doOracle=setup.doOracle,
                                    simplexConfig=self.solveLp.config.simplex,
                                    chunkSize=self.config.chunkSize, nCore=self.config.nCore,
                                    nSigma=setup.nSigma)
            records.extend(_endToEndRecords(setup.experimentId, k, report))
        return records

    def _bicAudit(self, index):
        name = "bicAudit"
        setup = self.config.endToEnd
        records = []
        for k in range(self.config.nInstances):
            instance = generateInstance(setup.generator, self._rng(index, k))
            rule = self.solveLp.run(instance).rule
            mechanism = Mechanism(setup.mechanism, instance, rule, seed=self._seed(index, k)).prepare()
            audit = bicAudit(mechanism, self.config.auditRuns, self._rng(index, k, 1),
                             sequential=setup.sequential, nSigma=setup.nSigma)
            records.append(makeRecord(name, k, "violations", len(audit.violations), 0, not audit.violations))
            records.append(makeRecord(name, k, "identityFailures", len(audit.identityFailures), 0,
                                      not audit.identityFailures))
        return records

    def _procurement(self, index):
        setup = self.config.procurement
        records = []
        for k in range(self.config.nInstances):
            instance = generateInstance(setup.generator, self._rng(index, k))
            rule = self.solveLp.run(instance).rule
            report = verifyEndToEnd(instance, rule, setup.mechanism, self.config.trials, self._seed(index, k),
                                    chunkSize=self.config.chunkSize, nCore=self.config.nCore,
                                    nSigma=setup.nSigma)
            records.append(makeRecord(setup.experimentId, k, "overBudget", report.summary.overBudget, 0,
                                      report.summary.overBudget == 0))
            records.extend(_endToEndRecords(setup.experimentId, k, report))
        return records


def _empiricalSigma(report):
    rates = np.nan_to_num(report.rates)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(report.activeCounts > 0,
                        np.sqrt(rates*(1.0 - rates)/np.maximum(report.activeCounts, 1)), np.inf)


def _endToEndRecords(name, k, report):
    records = [makeRecord(name, k, "achievedRatio", report.achievedRatio, report.guaranteeRatio,
                          report.passed),
               makeRecord(name, k, "lpObjective", report.lpObjective, None, True)]
    if report.oracleRevenue is not None:
        records.append(makeRecord(name, k, "oracleRevenue", report.oracleRevenue, None, True))
    return records
