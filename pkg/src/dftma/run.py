"""End-to-end pipelines: parse -> model -> state space -> measure, the
parametric region workflow, and export helpers.  The CLI is a thin wrapper
around these functions; tests drive them directly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import analysis, synth
from .analysis import (Ctmc, NondeterminismRemains, NotModular,
                       UndefinedMeasure, eliminate_immediate)
from .galileo import DftError, parse_dft, validate
from .measures import (COMPATIBILITY, CompatibilityError, MeasureKind,
                       MeasureSpec, OptimisationFlags, POR_SAFE,
                       check_compatibility, parse_event)
from .model import DftModel, build_model, detect_symmetries, export_dft_dot
from .state_space import (GenOptions, MarkovAutomaton, export_ma_dot,
                          export_ma_json, generate)


@dataclass
class RunConfig:
    """Options of one engine invocation (CLI flags map onto this)."""
    dft_text: str
    source: str = "<inline>"
    measure: MeasureSpec | None = None
    symred: bool | None = None            # None = automatic per measure
    dc: bool | None = None
    por: bool | None = None
    modularisation: bool | None = None
    instantiation: dict = field(default_factory=dict)
    budget: int | None = None
    seed: int = 0
    # region synthesis
    threshold: Fraction | None = None
    direction: str = "above"
    box: dict = field(default_factory=dict)
    coverage: float = 0.9
    depth: int = 24
    validate_samples: int = 100


def _fmt(v):
    """All floating output uses 9 significant digits."""
    if isinstance(v, float):
        return float("%.9g" % v)
    if isinstance(v, dict):
        return {k: _fmt(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_fmt(x) for x in v]
    return v


def to_json(doc: dict) -> str:
    return json.dumps(_fmt(doc), indent=2, sort_keys=True) + "\n"


def load_model(cfg: RunConfig) -> DftModel:
    return build_model(validate(parse_dft(cfg.dft_text)))


def effective_flags(spec: MeasureSpec, cfg: RunConfig,
                    parametric: bool) -> OptimisationFlags:
    """Resolve tri-state toggles: explicit requests are validated against the
    compatibility matrix, unset toggles default to what the measure allows."""
    row = COMPATIBILITY[spec.kind]
    flags = OptimisationFlags(
        symred=cfg.symred if cfg.symred is not None else True,
        dc=cfg.dc if cfg.dc is not None else row["dc"],
        por=cfg.por if cfg.por is not None else True,
        modularisation=(cfg.modularisation if cfg.modularisation is not None
                        else False))
    violations = check_compatibility(spec, flags, parametric)
    if violations:
        raise CompatibilityError(violations)
    return flags


def _keep_ids(m: DftModel, spec: MeasureSpec):
    keep = set()
    event = None
    if spec.event:
        formula = parse_event(spec.event)
        event = formula.compile(m)
        keep.update(m.index[a] for a in formula.atoms)
    if spec.be:
        if spec.be not in m.index:
            raise DftError("measure references unknown node %r" % spec.be)
        keep.add(m.index[spec.be])
    return frozenset(keep), event


def gen_options(m: DftModel, spec: MeasureSpec, flags: OptimisationFlags,
                cfg: RunConfig) -> GenOptions:
    keep, event = _keep_ids(m, spec)
    return GenOptions(
        symred=flags.symred,
        dc=flags.dc,
        por=flags.por and spec.kind in POR_SAFE,
        budget=cfg.budget,
        keep=keep,
        event=event)


def _full_instantiation(m: DftModel, cfg: RunConfig) -> dict:
    point = {k: Fraction(str(v)) if not isinstance(v, Fraction) else v
             for k, v in cfg.instantiation.items()}
    missing = [p for p in m.params if p not in point]
    if m.is_parametric():
        used = set()
        for poly in (list(m.be_lambda.values()) + list(m.be_dorm.values())
                     + list(m.pdep_prob.values())):
            used |= poly.variables()
        missing = [p for p in missing if p in used]
        if missing:
            raise DftError(
                "parametric input needs --set values for: %s"
                % ", ".join(missing))
    return point


def measure_on_ctmc(conc: Ctmc, spec: MeasureSpec):
    k = spec.kind
    if k == MeasureKind.RELIABILITY:
        return analysis.reliability(conc, spec.t)
    if k == MeasureKind.PROB_FAIL:
        return analysis.prob_fail(conc)
    if k == MeasureKind.MTTF:
        return analysis.mttf(conc, spec.conditional)
    if k == MeasureKind.VTTF:
        return analysis.vttf(conc, spec.conditional)
    if k == MeasureKind.EXPECTED_FAULTS:
        return analysis.expected_faults(conc, spec.conditional)
    if k == MeasureKind.FUSSELL_VESELY:
        return analysis.importance_fv(conc, spec.be)
    if k == MeasureKind.CRITICALITY:
        return analysis.importance_crit(conc, spec.be)
    raise ValueError(k)


def run_analyze(cfg: RunConfig, ma: MarkovAutomaton | None = None) -> dict:
    """Concrete measure pipeline; returns the machine-readable result record."""
    spec = cfg.measure
    doc: dict = {
        "command": "analyze",
        "input": cfg.source,
        "measure": {
            "kind": spec.kind.value,
            "t": spec.t,
            "be": spec.be,
            "conditional": spec.conditional,
            "event": spec.event,
        },
    }
    if ma is not None:
        ctmc = eliminate_immediate(ma)
        doc["states"] = {"ma_states": ma.n_states,
                         "ma_transitions": ma.num_transitions()}
        if isinstance(ctmc, NondeterminismRemains):
            return _bounds_result(doc, ma, spec)
        conc = ctmc.instantiate({})
        doc["states"]["ctmc_states"] = conc.n
        doc["states"]["ctmc_transitions"] = conc.n_transitions
        doc["value"] = float(measure_on_ctmc(conc, spec))
        return doc

    m = load_model(cfg)
    point = _full_instantiation(m, cfg)
    flags = effective_flags(spec, cfg, parametric=False)
    opts = gen_options(m, spec, flags, cfg)
    doc["options"] = {
        "symred": flags.symred, "dc": opts.dc, "por": opts.por,
        "modularisation": flags.modularisation, "budget": cfg.budget,
        "seed": cfg.seed,
    }
    doc["instantiation"] = {k: float(v) for k, v in point.items()}
    light = (COMPATIBILITY[spec.kind]["sym"] == "light" and flags.symred
             and spec.be is not None)
    doc["symmetry_light"] = light

    if flags.modularisation:
        if spec.kind not in (MeasureKind.RELIABILITY, MeasureKind.PROB_FAIL):
            raise CompatibilityError(check_compatibility(spec, flags))
        inst = _instantiated_model(m, point)
        value = analysis.modular_reliability(
            inst, spec.t if spec.kind == MeasureKind.RELIABILITY else None,
            replace(opts, budget=cfg.budget))
        doc["value"] = float(value)
        doc["modularised"] = True
        return doc

    ma = generate(m, opts)
    doc["states"] = {"ma_states": ma.n_states,
                     "ma_transitions": ma.num_transitions()}
    ctmc = eliminate_immediate(ma)
    if isinstance(ctmc, NondeterminismRemains):
        return _bounds_result(doc, _instantiate_ma(ma, point), spec)
    conc = ctmc.instantiate(point)
    doc["states"]["ctmc_states"] = conc.n
    doc["states"]["ctmc_transitions"] = conc.n_transitions
    doc["value"] = float(measure_on_ctmc(conc, spec))
    doc["modularised"] = False
    return doc


def _instantiated_model(m: DftModel, point: dict) -> DftModel:
    if not point:
        return m
    from .galileo import DftDescription, NodeDecl, Kind
    from .poly import Polynomial

    def subst(p):
        if p is None or not (p.variables() & set(point)):
            return p
        return Polynomial.constant(p.evaluate(point), p.params)

    decls = tuple(
        NodeDecl(d.name, d.kind, d.children, d.k, d.declared_n,
                 subst(d.lam), subst(d.dorm), subst(d.prob))
        for d in m.description.nodes)
    desc = DftDescription(m.description.top_name, decls, m.params)
    return build_model(validate(desc))


def _instantiate_ma(ma: MarkovAutomaton, point: dict) -> MarkovAutomaton:
    if not point:
        return ma
    from .poly import Polynomial

    def subst(p):
        if p.variables() & set(point):
            return Polynomial.constant(p.evaluate(point), p.params)
        return p

    delay = [tuple((be, subst(r), t) for be, r, t in d) for d in ma.delay]
    choices = [tuple((pd, tuple((subst(p), t, f) for p, t, f in br))
                     for pd, br in c) for c in ma.choices]
    return MarkovAutomaton(ma.params, ma.kinds, ma.absorb, ma.labels,
                           delay, choices, ma.states, ma.initial)


def _bounds_result(doc: dict, ma: MarkovAutomaton, spec: MeasureSpec) -> dict:
    if spec.kind == MeasureKind.PROB_FAIL:
        lo, hi = analysis.prob_fail_bounds(ma)
    elif spec.kind == MeasureKind.MTTF and not spec.conditional:
        lo, hi = analysis.mttf_bounds(ma)
    else:
        raise NondeterminismError(
            "nondeterminism remains; measure %s supports only min/max "
            "bounds for probfail and unconditional mttf" % spec.kind.value)
    doc["value"] = {"min": float(lo), "max": float(hi)}
    doc["nondeterministic"] = True
    return doc


class NondeterminismError(Exception):
    pass


# ---------------------------------------------------------------------------
# Region synthesis
# ---------------------------------------------------------------------------

def param_roles(m: DftModel) -> dict:
    roles: dict = {}
    for p in m.be_lambda.values():
        for v in p.variables():
            roles.setdefault(v, "rate")
    for p in m.be_dorm.values():
        for v in p.variables():
            roles[v] = "dorm" if roles.get(v) != "rate" else "rate"
    for p in m.pdep_prob.values():
        for v in p.variables():
            roles.setdefault(v, "prob")
    return roles


def parametric_ctmc(m: DftModel, spec: MeasureSpec, cfg: RunConfig) -> Ctmc:
    flags = effective_flags(spec, cfg, parametric=True)
    opts = gen_options(m, spec, flags, cfg)
    ma = generate(m, opts)
    ctmc = eliminate_immediate(ma)
    if isinstance(ctmc, NondeterminismRemains):
        raise NondeterminismError(
            "parameter synthesis requires a deterministic reduction; "
            "%d immediate states keep several choices"
            % sum(1 for i in range(ma.n_states)
                  if ma.kinds[i] == "I" and len(ma.choices[i]) > 1))
    return ctmc


def run_regions(cfg: RunConfig) -> dict:
    spec = cfg.measure
    m = load_model(cfg)
    if not m.is_parametric():
        raise DftError("regions requires a parametric fault tree "
                       "(no symbolic rates found)")
    ctmc = parametric_ctmc(m, spec, cfg)
    f = synth.param_eliminate(ctmc, spec)
    roles = param_roles(m)
    box = synth.clip_box(cfg.box, roles)
    verdicts = synth.partition(f, cfg.threshold, cfg.direction, box,
                               cfg.coverage, cfg.depth)
    params = tuple(p for p in f.params if p in box)
    csv = synth.regions_csv(verdicts, params)
    coverage = synth.coverage_fraction(verdicts)
    doc = {
        "command": "regions",
        "input": cfg.source,
        "measure": {"kind": spec.kind.value, "conditional": spec.conditional},
        "function": str(f),
        "threshold": float(cfg.threshold),
        "direction": cfg.direction,
        "coverage": coverage,
        "verdicts": {
            "above": sum(1 for v in verdicts if v.cls == "above"),
            "below": sum(1 for v in verdicts if v.cls == "below"),
            "unknown": sum(1 for v in verdicts if v.cls == "unknown"),
        },
    }
    if cfg.validate_samples > 0:
        violations = validate_regions(
            ctmc, spec, verdicts, params, cfg.threshold,
            samples_per_box=cfg.validate_samples, seed=cfg.seed)
        doc["sampling"] = {"per_box": cfg.validate_samples,
                           "violations": violations}
    return {"doc": doc, "csv": csv, "function": f, "verdicts": verdicts}


def validate_regions(ctmc: Ctmc, spec: MeasureSpec, verdicts: list,
                     params: tuple, threshold, samples_per_box: int,
                     seed: int, scalar_checks_per_box: int = 1) -> int:
    """Check classified boxes against concrete values on random interior
    points; returns the number of misclassifications.

    The bulk samples solve the instantiated transient systems as stacked
    dense systems; per box a few points additionally go through the scalar
    per-point pipeline, which must agree with the batched values.
    """
    rng = np.random.default_rng(seed)
    thr = float(threshold)
    bad = 0
    for v in verdicts:
        if v.cls == "unknown":
            continue
        points = {p: float(lo) + rng.random(samples_per_box) * float(hi - lo)
                  for p, (lo, hi) in zip(params, v.box)}
        values = analysis.measure_batch(ctmc, spec, points)
        above = values > thr
        bad += int(np.count_nonzero(above != (v.cls == "above")))
        for j in range(min(scalar_checks_per_box, samples_per_box)):
            point = {p: points[p][j] for p in points}
            conc = ctmc.instantiate(point, exact=False)
            val = measure_on_ctmc(conc, spec)
            if abs(val - values[j]) > 1e-9 * max(1.0, abs(val)):
                bad += 1
    return bad


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def run_export(cfg: RunConfig, want_dft_dot=False, want_ma_dot=False,
               want_ma_json=False) -> dict:
    m = load_model(cfg)
    out: dict = {"command": "export", "input": cfg.source}
    artifacts: dict = {}
    if want_dft_dot:
        artifacts["dft_dot"] = export_dft_dot(m)
    if want_ma_dot or want_ma_json:
        spec = cfg.measure or MeasureSpec(MeasureKind.PROB_FAIL)
        flags = effective_flags(spec, cfg, parametric=False)
        opts = gen_options(m, spec, flags, cfg)
        ma = generate(m, opts)
        out["states"] = {"ma_states": ma.n_states,
                         "ma_transitions": ma.num_transitions()}
        out["options"] = {"symred": flags.symred, "dc": opts.dc,
                          "por": opts.por}
        if want_ma_dot:
            artifacts["ma_dot"] = export_ma_dot(ma)
        if want_ma_json:
            artifacts["ma_json"] = to_json(export_ma_json(ma))
    return {"doc": out, "artifacts": artifacts}
