"""Configuration-driven experiments: risk tables, acceptance sweeps and theorem suites.

A configuration is a JSON document (see the README for the schema). Every
replicate draws from its own counter-based stream ``RngSpec(seed, replicate)``,
so results do not depend on the number of worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import gen_models as gm
from .classifiers import FAMILIES, Classifier, LinearClassifier, TrainConfig, fit
from .core import CROSS_ENTROPY, ZERO_ONE, LossFunction, ResponseModel, RngSpec
from .realdata import SplitPlan, TabularDataset, load_csv, train_oracle
from .recourse import (
    AcceptanceFunction,
    CostFunction,
    RecoursePolicy,
    apply_recourse,
    make_searcher,
)
from .risk import (
    classifier_risk_check,
    general_loss_check,
    identity_check,
    linear_in_p_fit,
    TheoremCheck,
    risk_report,
    surrogate_risk_check,
)
from .strategic import InvariantFamily, estimate_delta, verify_compliant_bound, verify_defiant_equality


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


def _take(d: dict, where: str, required=(), optional=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    return d


SYNTHETIC = ("gaussians", "moons", "circles", "discrete")
DATASET_KEYS = {
    "gaussians": ("mu", "nu", "sigma", "class_prior"),
    "moons": ("noise", "arc_resolution"),
    "circles": ("noise", "scale", "arc_resolution"),
    "discrete": ("points", "joint_probs"),
    "csv": ("path", "label_column", "positive_value", "categorical", "plan"),
}
FAMILY_LABELS = {
    "bayes": "Bayes",
    "logistic-regression": "LR",
    "gaussian-nb": "NB",
    "qda": "QDA",
    "decision-tree": "DT",
    "gbt": "GBT",
}


@dataclass
class DatasetSpec:
    kind: str
    params: dict = field(default_factory=dict)
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass
class ClassifierSpec:
    family: str
    hyperparameters: dict = field(default_factory=dict)
    label: Optional[str] = None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.family == "mlp":
            sizes = tuple(self.hyperparameters.get("hidden_layer_sizes", (8, 16)))
            return "MLP" + str(sizes).replace(" ", "").replace(",)", ")")
        return FAMILY_LABELS.get(self.family, self.family)


@dataclass
class MethodSpec:
    name: str
    searcher: dict
    acceptance: dict = field(default_factory=lambda: {"kind": "always"})
    cost: dict = field(default_factory=lambda: {"kind": "euclidean"})


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    classifiers: list
    methods: list
    responses: list = field(default_factory=lambda: ["compliant", "defiant"])
    loss: str = "zero-one"
    replicates: int = 10
    n_train: int = 5000
    n_test: int = 1000
    seed: int = 0
    sweep: Optional[dict] = None
    verify: Optional[dict] = None
    output: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a configuration document; unknown keys anywhere are rejected."""
    _take(
        doc,
        "config",
        required=("dataset", "classifiers"),
        optional=("methods", "recourse", "responses", "loss", "replicates", "n_train", "n_test", "seed", "sweep", "verify", "output"),
    )
    ds = doc["dataset"]
    if not isinstance(ds, dict) or "kind" not in ds:
        raise ConfigError("dataset: needs a 'kind'")
    kind = ds["kind"]
    if kind not in DATASET_KEYS:
        raise ConfigError(f"dataset: unknown kind {kind!r}; expected one of {sorted(DATASET_KEYS)}")
    _take(ds, "dataset", required=("kind",), optional=DATASET_KEYS[kind] + ("name",))
    dataset = DatasetSpec(kind, {k: v for k, v in ds.items() if k not in ("kind", "name")}, ds.get("name"))
    if kind == "csv":
        for k in ("path", "label_column", "positive_value"):
            if k not in dataset.params:
                raise ConfigError(f"dataset: csv needs {k!r}")

    classifiers = []
    if not isinstance(doc["classifiers"], list) or not doc["classifiers"]:
        raise ConfigError("classifiers: expected a nonempty list")
    for i, c in enumerate(doc["classifiers"]):
        if isinstance(c, str):
            c = {"family": c}
        _take(c, f"classifiers[{i}]", required=("family",), optional=("hyperparameters", "label"))
        if c["family"] not in FAMILIES + ("bayes",):
            raise ConfigError(f"classifiers[{i}]: unknown family {c['family']!r}")
        if c["family"] == "bayes" and kind == "csv":
            raise ConfigError("the Bayes classifier needs a synthetic dataset")
        classifiers.append(ClassifierSpec(c["family"], dict(c.get("hyperparameters", {})), c.get("label")))

    if "methods" in doc and "recourse" in doc:
        raise ConfigError("give either 'methods' or 'recourse', not both")
    raw_methods = doc.get("methods") or [dict(doc.get("recourse", {"searcher": {"kind": "grid-brute-force"}}))]
    methods = []
    for i, m in enumerate(raw_methods):
        _take(m, f"methods[{i}]", required=("searcher",), optional=("name", "acceptance", "cost"))
        s = _take(m["searcher"], f"methods[{i}].searcher", required=("kind",), optional=("params",))
        a = _take(m.get("acceptance", {"kind": "always"}), f"methods[{i}].acceptance", required=("kind",), optional=("param",))
        c = _take(m.get("cost", {"kind": "euclidean"}), f"methods[{i}].cost", required=("kind",), optional=("weights",))
        spec = MethodSpec(m.get("name", s["kind"]), dict(s), dict(a), dict(c))
        _build_policy(spec, None)  # validates the pieces
        methods.append(spec)
    if len({m.name for m in methods}) != len(methods):
        raise ConfigError("method names must be unique")

    responses = doc.get("responses", ["compliant", "defiant"])
    for r in responses:
        try:
            ResponseModel.from_name(r)
        except ValueError as exc:
            raise ConfigError(f"responses: {exc}") from exc
    loss = doc.get("loss", "zero-one")
    if loss not in ("zero-one", "cross-entropy"):
        raise ConfigError("loss must be 'zero-one' or 'cross-entropy'")
    replicates = int(doc.get("replicates", 10))
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    sweep = doc.get("sweep")
    if sweep is not None:
        _take(sweep, "sweep", required=("parameter", "grid"))
        if sweep["parameter"] not in ("p", "sigma2"):
            raise ConfigError("sweep.parameter must be 'p' or 'sigma2'")
        if len(sweep["grid"]) < 1:
            raise ConfigError("sweep.grid must be nonempty")
    verify = doc.get("verify")
    if verify is not None:
        _take(verify, "verify", required=("suites",), optional=("n", "instances", "widths", "p_grid"))
        bad = set(verify["suites"]) - set(SUITES)
        if bad:
            raise ConfigError(f"verify.suites: unknown suites {sorted(bad)}; expected some of {list(SUITES)}")
    return ExperimentConfig(
        dataset,
        classifiers,
        methods,
        list(responses),
        loss,
        replicates,
        int(doc.get("n_train", 5000)),
        int(doc.get("n_test", 1000)),
        int(doc.get("seed", 0)),
        sweep,
        verify,
        doc.get("output"),
    )


# ---------------------------------------------------------------------------
# Building blocks


def build_model(spec: DatasetSpec):
    p = spec.params
    try:
        if spec.kind == "gaussians":
            return gm.TwoGaussians(**p)
        if spec.kind == "moons":
            return gm.MoonsModel(**p)
        if spec.kind == "circles":
            return gm.CirclesModel(**p)
        if spec.kind == "discrete":
            return gm.DiscreteGridModel(p["points"], p["joint_probs"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"dataset: {exc}") from exc
    raise ConfigError(f"dataset kind {spec.kind!r} has no generative model")


def _build_policy(spec: MethodSpec, model) -> RecoursePolicy:
    params = dict(spec.searcher.get("params", {}))
    kind = spec.searcher["kind"]
    if kind == "grid-brute-force" and "bounds" not in params and model is not None and hasattr(model, "bounds"):
        if isinstance(model, gm.DiscreteGridModel):
            params.setdefault("candidates", model.points)
        else:
            params["bounds"] = model.bounds()
    try:
        searcher = make_searcher(kind, **params)
        acceptance = AcceptanceFunction(spec.acceptance["kind"], spec.acceptance.get("param"))
        cost = CostFunction(spec.cost["kind"], spec.cost.get("weights"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"method {spec.name!r}: {exc}") from exc
    return RecoursePolicy(searcher, acceptance, cost)


def _loss(name: str) -> LossFunction:
    return ZERO_ONE if name == "zero-one" else CROSS_ENTROPY


def _train(spec: ClassifierSpec, model, X, y, seed: int) -> Classifier:
    if spec.family == "bayes":
        return gm.bayes_classifier(model)
    return fit(TrainConfig(spec.family, spec.hyperparameters, seed), X, y)


@dataclass
class ReplicateData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    model: object
    flags: dict = field(default_factory=dict)


class DataSource:
    """Supplies per-replicate train/test data and the label posterior."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        spec = config.dataset
        self.csv = spec.kind == "csv"
        if not self.csv:
            self.model = build_model(spec)
            return
        p = spec.params
        try:
            self.dataset: TabularDataset = load_csv(p["path"], p["label_column"], p["positive_value"], p.get("categorical", ()))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"dataset: cannot read {p['path']}: {exc}") from exc
        plan = p.get("plan", "heloc")
        if isinstance(plan, str):
            self.plan = SplitPlan.preset(plan, seed=config.seed)
        else:
            _take(plan, "dataset.plan", required=("n_cond_train", "n_cond_calib", "n_train", "n_test"))
            self.plan = SplitPlan(seed=config.seed, **{k: int(v) for k, v in plan.items()})
        try:
            self.base_indices = self.plan.split(len(self.dataset), 0)
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from exc
        self.model = train_oracle(self.dataset, self.plan, indices=self.base_indices, seed=config.seed)

    def replicate(self, r: int) -> ReplicateData:
        cfg = self.config
        spec = RngSpec(cfg.seed, r)
        if not self.csv:
            Xtr, ytr = self.model.sample(cfg.n_train, spec.substream("train"))
            Xte, yte = self.model.sample(cfg.n_test, spec.substream("test"))
            return ReplicateData(Xtr, ytr, Xte, yte, self.model)
        used = np.concatenate([self.base_indices["cond_train"], self.base_indices["cond_calib"]])
        rest = np.setdiff1d(np.arange(len(self.dataset)), used)
        perm = spec.substream("split").generator().permutation(rest)
        tr = np.sort(perm[: self.plan.n_train])
        te = np.sort(perm[self.plan.n_train : self.plan.n_train + self.plan.n_test])
        ds = self.dataset
        neg_rate = float(np.mean(ds.y[te] == -1))
        flags = {"negative_base_rate": neg_rate, "class_imbalance": bool(neg_rate < 0.10)}
        return ReplicateData(ds.X[tr], ds.y[tr], ds.X[te], ds.y[te], self.model, flags)


def _classifier_summary(clf: Classifier) -> dict:
    d = dict(clf.metadata)
    if isinstance(clf, LinearClassifier):
        d.update(theta=clf.theta.tolist(), theta0=float(clf.theta0))
    return d


# ---------------------------------------------------------------------------
# run


def _run_replicate(args):
    config, r, source = args
    data = source.replicate(r)
    spec = RngSpec(config.seed, r)
    loss = _loss(config.loss)
    rows, fitted = [], []
    policies = {m.name: _build_policy(m, data.model) for m in config.methods}
    for ci, cspec in enumerate(config.classifiers):
        clf = _train(cspec, data.model, data.X_train, data.y_train, config.seed * 1000 + r)
        fitted.append({"replicate": r, "classifier": cspec.name, **_classifier_summary(clf)})
        for mspec in config.methods:
            policy = policies[mspec.name]
            cf = policy.searcher(clf, data.X_test, policy.cost, spec.substream("search"))
            for resp_name in config.responses:
                resp = ResponseModel.from_name(resp_name)
                batch = apply_recourse(policy, clf, data.model, resp, data.X_test, data.y_test, spec.substream("recourse"), cf=cf)
                rep = risk_report(clf, batch, loss)
                rows.append(
                    {
                        "dataset": config.dataset.label,
                        "classifier": cspec.name,
                        "method": mspec.name,
                        "response": resp.name,
                        "replicate": r,
                        "r_p": rep.r_p,
                        "r_q": rep.r_q,
                        "stderr_p": rep.stderr_p,
                        "stderr_q": rep.stderr_q,
                        "stderr_diff": rep.stderr_diff,
                        "n": rep.n,
                        "decomposition": rep.decomposition,
                        "flags": data.flags,
                    }
                )
    return rows, fitted


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _mean_std(values):
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def aggregate(rows: list) -> list:
    """Mean and standard deviation across replicates with the bolding rule.

    The lower risk is bold; when the intervals ``mean +- std`` overlap, both are.
    """
    groups = {}
    for row in rows:
        key = (row["dataset"], row["classifier"], row["method"], row["response"])
        groups.setdefault(key, []).append(row)
    out = []
    for key, items in groups.items():
        items = sorted(items, key=lambda r: r["replicate"])
        mp, sp = _mean_std([r["r_p"] for r in items])
        mq, sq = _mean_std([r["r_q"] for r in items])
        overlap = (mp - sp <= mq + sq) and (mq - sq <= mp + sp)
        flags = items[0].get("flags") or {}
        out.append(
            {
                "dataset": key[0],
                "classifier": key[1],
                "method": key[2],
                "response": key[3],
                "r_p_mean": mp,
                "r_p_std": sp,
                "r_q_mean": mq,
                "r_q_std": sq,
                "r_p_stderr": math.fsum(r["stderr_p"] for r in items) / len(items),
                "r_q_stderr": math.fsum(r["stderr_q"] for r in items) / len(items),
                "bold_r_p": bool(overlap or mp <= mq),
                "bold_r_q": bool(overlap or mq <= mp),
                "n_replicates": len(items),
                "class_imbalance": bool(flags.get("class_imbalance", False)),
            }
        )
    return out


def run(config: ExperimentConfig, jobs: int = 1) -> dict:
    """Execute every replicate and return the results archive."""
    source = DataSource(config)
    results = _map(_run_replicate, [(config, r, source) for r in range(config.replicates)], jobs)
    rows = [row for rs, _ in results for row in rs]
    fitted = [f for _, fs in results for f in fs]
    archive = {
        "kind": "run",
        "config": config.to_dict(),
        "rows": rows,
        "table": aggregate(rows),
        "classifiers": fitted,
    }
    if source.csv:
        archive["oracle"] = source.model.provenance
        archive["dataset_provenance"] = source.dataset.provenance
    return archive


# ---------------------------------------------------------------------------
# sweep


def _sweep_replicate(args):
    config, r, source = args
    data = source.replicate(r)
    spec = RngSpec(config.seed, r)
    loss = _loss(config.loss)
    param = config.sweep["parameter"]
    grid = [float(v) for v in config.sweep["grid"]]
    rows = []
    for cspec in config.classifiers:
        clf = _train(cspec, data.model, data.X_train, data.y_train, config.seed * 1000 + r)
        for mspec in config.methods:
            base = _build_policy(mspec, data.model)
            cf = base.searcher(clf, data.X_test, base.cost, spec.substream("search"))
            for resp_name in config.responses:
                resp = ResponseModel.from_name(resp_name)
                for v in grid:
                    acc = AcceptanceFunction("constant" if param == "p" else "gaussian-kernel", v)
                    pol = RecoursePolicy(base.searcher, acc, base.cost)
                    batch = apply_recourse(pol, clf, data.model, resp, data.X_test, data.y_test, spec.substream("recourse"), cf=cf)
                    rep = risk_report(clf, batch, loss)
                    rows.append(
                        {
                            "dataset": config.dataset.label,
                            "classifier": cspec.name,
                            "method": mspec.name,
                            "response": resp.name,
                            "replicate": r,
                            "parameter": param,
                            "value": v,
                            "r_p": rep.r_p,
                            "r_q": rep.r_q,
                            "diff": rep.r_q - rep.r_p,
                            "stderr_diff": rep.stderr_diff,
                        }
                    )
    return rows


def sweep(config: ExperimentConfig, jobs: int = 1) -> dict:
    """Risk difference ``R_Q - R_P`` across a grid of ``p`` or ``sigma2``, plus a line fit for ``p``."""
    if config.sweep is None:
        raise ConfigError("config has no 'sweep' section")
    source = DataSource(config)
    results = _map(_sweep_replicate, [(config, r, source) for r in range(config.replicates)], jobs)
    rows = [row for rs in results for row in rs]
    series = {}
    for row in rows:
        key = (row["dataset"], row["classifier"], row["method"], row["response"], row["value"])
        series.setdefault(key, []).append(row["diff"])
    points = []
    for key in sorted(series):
        m, s = _mean_std(series[key])
        points.append(
            {
                "dataset": key[0],
                "classifier": key[1],
                "method": key[2],
                "response": key[3],
                "parameter": config.sweep["parameter"],
                "value": key[4],
                "diff_mean": m,
                "diff_std": s,
            }
        )
    fits = []
    if config.sweep["parameter"] == "p":
        curves = {}
        for pt in points:
            curves.setdefault((pt["dataset"], pt["classifier"], pt["method"], pt["response"]), []).append(pt)
        for key, pts in curves.items():
            x = np.array([p["value"] for p in pts])
            yv = np.array([p["diff_mean"] for p in pts])
            if len(set(x.tolist())) < 2:
                continue
            slope, intercept = np.polyfit(x, yv, 1)
            resid = yv - (slope * x + intercept)
            ss_tot = float(np.sum((yv - yv.mean()) ** 2))
            r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
            fits.append(
                {
                    "dataset": key[0],
                    "classifier": key[1],
                    "method": key[2],
                    "response": key[3],
                    "intercept": float(intercept),
                    "slope": float(slope),
                    "r_squared": r2,
                }
            )
    return {"kind": "sweep", "config": config.to_dict(), "rows": rows, "series": points, "fits": fits}


# ---------------------------------------------------------------------------
# verify

SUITES = ("identity", "classifier", "surrogate", "general-loss", "linear-in-p", "strategic")


def _random_surrogate_instance(rng: np.random.Generator, base: LinearClassifier):
    """A scaled, shifted, possibly flipped copy of a linear classifier."""
    temp = float(np.exp(rng.uniform(np.log(0.05), np.log(5.0))))
    sign = -1.0 if rng.random() < 0.25 else 1.0
    shift = float(rng.normal(0.0, 1.0))
    norm = float(np.linalg.norm(base.theta))
    clf = LinearClassifier(sign * temp * base.theta, sign * temp * (base.theta0 + shift * norm), family="perturbed-linear")
    kind = rng.choice(["always", "threshold", "gaussian-kernel", "constant"])
    param = {"always": None, "threshold": float(rng.uniform(0.2, 2.0)), "gaussian-kernel": float(rng.uniform(0.1, 2.0)), "constant": float(rng.uniform(0.2, 1.0))}[kind]
    response = ResponseModel(float(rng.choice([0.0, 1.0, rng.uniform()])))
    return clf, AcceptanceFunction(str(kind), param), response


def verify(config: ExperimentConfig) -> dict:
    """Run the configured theorem suites on a synthetic dataset and collect the checks."""
    if config.verify is None:
        raise ConfigError("config has no 'verify' section")
    if config.dataset.kind == "csv":
        raise ConfigError("verify needs a synthetic dataset with a known posterior")
    model = build_model(config.dataset)
    vcfg = config.verify
    n = int(vcfg.get("n", config.n_test))
    suites = list(vcfg["suites"])
    checks = []
    spec = RngSpec(config.seed, 0)
    X_train, y_train = model.sample(config.n_train, spec.substream("train"))
    X, y = model.sample(n, spec.substream("test"))
    bayes = gm.bayes_classifier(model)

    def record(suite, check, **meta):
        checks.append({"suite": suite, "dataset": config.dataset.label, **meta, **check.to_dict()})

    trained = {c.name: _train(c, model, X_train, y_train, config.seed) for c in config.classifiers}
    for mspec in config.methods:
        policy = _build_policy(mspec, model)
        if "identity" in suites:
            cf = policy.searcher(bayes, X, policy.cost, spec.substream("search"))
            for case in ("compliant", "defiant"):
                batch = apply_recourse(policy, bayes, model, ResponseModel.from_name(case), X, y, spec.substream("recourse"), cf=cf)
                record("identity", identity_check(case, bayes, batch, model=model), classifier="Bayes", method=mspec.name, response=case)
        for name, clf in trained.items() if {"classifier", "general-loss", "linear-in-p"} & set(suites) else ():
            cf = policy.searcher(clf, X, policy.cost, spec.substream("search"))
            for case in ("compliant", "defiant"):
                resp = ResponseModel.from_name(case)
                batch = apply_recourse(policy, clf, model, resp, X, y, spec.substream("recourse"), cf=cf)
                meta = dict(classifier=name, method=mspec.name, response=case)
                if "classifier" in suites and (case == "defiant" or clf.continuous):
                    record("classifier", classifier_risk_check(case, clf, batch, model=model), **meta)
                if "general-loss" in suites:
                    record("general-loss", general_loss_check(case, clf, model, batch), **meta)
            if "linear-in-p" in suites:
                p_grid = vcfg.get("p_grid", [0.0, 0.25, 0.5, 0.75, 1.0])
                fit_ = linear_in_p_fit(clf, model, policy, p_grid, n, spec.substream(f"p-{name}"), ResponseModel(1.0), data=(X, y))
                ok = fit_.r_squared > 0.99 and fit_.intercept_ok and fit_.slope_ok
                record(
                    "linear-in-p",
                    TheoremCheck("linear-in-p", fit_.slope, rhs=fit_.r_q1 - fit_.r_p, verdict="holds" if ok else "fails", details=fit_.to_dict()),
                    classifier=name,
                    method=mspec.name,
                    response="compliant",
                )
    if "surrogate" in suites:
        base = LinearClassifier(*_fit_lr(X_train, y_train))
        gen = spec.substream("instances").generator()
        searcher = make_searcher("hyperplane-projection")
        for i in range(int(vcfg.get("instances", 50))):
            clf, acc, resp = _random_surrogate_instance(gen, base)
            pol = RecoursePolicy(searcher, acc)
            batch = apply_recourse(pol, clf, model, resp, X, y, spec.substream(f"instance-{i}"))
            if not np.any(batch.b & (batch.f0 == -1)):
                continue
            record("surrogate", surrogate_risk_check(clf, CROSS_ENTROPY, batch), classifier=f"instance-{i}", method=acc.label(), response=resp.name)
    if "strategic" in suites:
        if not isinstance(model, (gm.TwoGaussians, gm.DiscreteGridModel)) or (isinstance(model, gm.TwoGaussians) and model.dim != 2):
            raise ConfigError("the strategic suite needs a 2-D Gaussian or discrete model")
        for width in vcfg.get("widths", [0.5, 1.0]):
            fam = InvariantFamily("linear", float(width))
            nn = None if isinstance(model, gm.DiscreteGridModel) else n
            record("strategic", verify_defiant_equality(fam, model, nn, spec.substream(f"strategic-{width}")), classifier="linear-family", method=f"width={width}", response="defiant")
            if isinstance(model, gm.TwoGaussians):
                record("strategic", verify_compliant_bound(fam, model, nn, spec.substream(f"strategic-{width}")), classifier="linear-family", method=f"width={width}", response="compliant")
                checks[-1]["delta"] = estimate_delta(fam, model, nn, spec.substream(f"strategic-{width}")).to_dict()
    summary = {}
    for c in checks:
        s = summary.setdefault(c["suite"], {"holds": 0, "fails": 0, "inconclusive": 0})
        s[c["verdict"]] += 1
    return {"kind": "verify", "config": config.to_dict(), "checks": checks, "summary": summary}


def _fit_lr(X, y):
    clf = fit(TrainConfig("logistic-regression"), X, y)
    return clf.theta, clf.theta0
