# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import argparse
import pathlib
import sys

import numpy as np
import yaml

from .config import (
    ConfigError,
    apply_overrides,
    initial_state,
    iterate_options,
    load_config,
    model_from_config,
    time_grid,
)
from .effective import (
    FORMULAS,
    decay_positivity,
    h_1d,
    h_loy,
    h_loy0,
    h_loy_imp,
    h_spectral,
    iterate_v,
)
from .evolution import (
    compare_trajectories,
    decay_product_amplitudes,
    evolve_effective,
    evolve_exact,
    probability_budget,
    survival_probability,
    write_trajectory_csv,
)
from .friedrichs_lee import (
    LOY_WEIGHT,
    fl_cross_validate,
    fl_diag_difference_analytic,
    fl_estimate_kaon,
    fl_gamma,
)
from .logging import clear_logger, log, log_raw, set_logger
from .model import ModelError, check_ww_conditions, diagnose_loy_conditions, locate_crossing
from .self_energy import SelfEnergyEvaluator
from .sweep import generate_sweep_entries
from .symmetry import build_cpt, cpt_residual, diag_difference
from .utils import (
    NumericalError,
    complex_cells,
    format_real,
    write_csv,
    write_if_different,
)

ACTIONS = ["heff", "evolve", "fl-estimate", "diagnose", "sweep"]

UNITS = "model energy units; time in inverse energy units"

EXACT_FORMULA = "psi(t) = exp(-itH) psi0"


def _header(config, model, evaluator, **extra):
    header = {
        "units": UNITS,
        "eta": format_real(evaluator.eta),
        "grid_points": len(model.partition.perpendicular),
        "grid_spacing": format_real(evaluator.spacing),
        "m0": format_real(model.m0),
        "seed": config.get("seed", 0),
    }
    header.update(extra)

    return header


def _write_text(p: pathlib.Path, lines):
    write_if_different(p, ("\n".join(lines) + "\n").encode("utf-8"))


def _heff_for(method: str, model, evaluator, config):
    iteration = None

    if method == "loy0":
        heff = h_loy0(model, evaluator=evaluator)
    elif method == "loy":
        heff = h_loy(model, evaluator=evaluator)
    elif method == "improved":
        heff = h_loy_imp(model, evaluator=evaluator)
    elif method == "spectral":
        heff = h_spectral(model, evaluator=evaluator)
    elif method == "iterate":
        options = iterate_options(config)
        iteration = iterate_v(
            model,
            options["max_iter"],
            options["tol"],
            evaluator=evaluator,
            complex_arguments=options["complex_arguments"],
        )
        heff = iteration.heff()
    elif method == "onedim":
        heff = h_1d(model, initial_state(config, model.dimension), eta=evaluator.eta)
    else:
        raise ConfigError("unknown method %r" % method)

    return heff, iteration


def compute_heff(method: str, model, evaluator, config):
    """Return ``(heff, iteration)`` for one method name.

    Failures are re-raised naming ``method``.
    """
    try:
        return _heff_for(method, model, evaluator, config)
    except ModelError as e:
        raise ModelError("%s: %s" % (method, e)) from e
    except NumericalError as e:
        if e.method == method:
            raise
        raise NumericalError("%s: %s" % (e.method, e), method=method) from e


def _heff_rows(heff):
    for quantity, matrix in (
        ("H", heff.matrix),
        ("M", heff.mass_part),
        ("Gamma", heff.decay_part),
    ):
        for i in range(heff.dimension):
            for j in range(heff.dimension):
                yield [quantity, i + 1, j + 1] + complex_cells(matrix[i, j])

    for i, value in enumerate(heff.eigenvalues()):
        yield ["eigenvalue", i + 1, ""] + complex_cells(value)

    if heff.dimension == 2:
        yield ["diag_difference", 1, 2] + complex_cells(diag_difference(heff))

    yield ["gamma_min_eigenvalue", "", ""] + complex_cells(decay_positivity(heff))


def cmd_heff(config, out: pathlib.Path):
    model, _ = model_from_config(config)
    evaluator = SelfEnergyEvaluator.for_model(model, config.get("eta"))

    report = [
        "effective Hamiltonians (eta=%s, grid spacing=%s, perpendicular states=%d)"
        % (
            format_real(evaluator.eta),
            format_real(evaluator.spacing),
            len(model.partition.perpendicular),
        ),
        "",
    ]

    for name, ratios in sorted(check_ww_conditions(model).items()):
        report.append("weak coupling %s: max %s" % (name, format_real(np.max(ratios))))
    report.append("")

    if config.get("cpt"):
        theta = build_cpt(model)
        residual = cpt_residual(theta, model.h)
        report.append("CPT residual ||U H* - H U||: %s" % format_real(residual))
        report.append("")

    results = []
    for method in config["methods"]:
        log("computing %s", method)
        results.append((method, *compute_heff(method, model, evaluator, config)))

    for method, heff, iteration in results:
        write_csv(
            out / ("heff_%s.csv" % method),
            _header(config, model, evaluator, method=method, formula=FORMULAS[method]),
            ["quantity", "row", "col", "re", "im"],
            _heff_rows(heff),
        )

        report.append("%s: H = %s" % (method, FORMULAS[method]))
        for value, lifetime in zip(heff.eigenvalues(), heff.lifetimes):
            report.append(
                "  eigenvalue %s%+si  lifetime %s"
                % (format_real(value.real), format_real(value.imag), format_real(lifetime))
            )
        if heff.dimension == 2:
            d = diag_difference(heff)
            report.append("  h11 - h22 = %s%+si" % (format_real(d.real), format_real(d.imag)))
        report.append("  min eigenvalue of Gamma: %s" % format_real(decay_positivity(heff)))

        if iteration is not None:
            write_csv(
                out / "iterate_history.csv",
                _header(config, model, evaluator, method="iterate", formula=FORMULAS["iterate"]),
                ["iteration", "delta_v"],
                ([n + 1, format_real(d)] for n, d in enumerate(iteration.history)),
            )
            report.append(
                "  iterations: %d, converged: %s" % (iteration.iterations, iteration.converged)
            )

    _write_text(out / "report.txt", report)


def cmd_evolve(config, out: pathlib.Path):
    model, _ = model_from_config(config)
    evaluator = SelfEnergyEvaluator.for_model(model, config.get("eta"))
    times = time_grid(config)
    psi0 = initial_state(config, model.dimension)

    exact = evolve_exact(model, psi0, times)
    mirrored = evolve_exact(model, psi0, -times)
    evenness = survival_probability(exact) - survival_probability(mirrored)

    forward = times[times >= 0.0]
    exact_forward = evolve_exact(model, psi0, forward)

    results = []
    for method in config["methods"]:
        if method == "onedim":
            log("skipping onedim: its Hamiltonian acts on psi0 alone")
            continue

        log("evolving %s", method)
        heff, _ = compute_heff(method, model, evaluator, config)
        effective = evolve_effective(heff, psi0, forward)
        products = decay_product_amplitudes(heff, model, psi0, forward)
        budget = probability_budget(effective, products, model)
        results.append((method, effective, budget))

    write_trajectory_csv(
        out / "trajectory_exact.csv",
        exact,
        _header(config, model, evaluator, method="exact", formula=EXACT_FORMULA),
        extra={"evenness": evenness},
    )

    report = [
        "exact evolution: max |p(t) - p(-t)| = %s" % format_real(np.max(np.abs(evenness))),
        "",
    ]

    for method, effective, budget in results:
        header = _header(config, model, evaluator, method=method, formula=FORMULAS[method])
        write_trajectory_csv(
            out / ("trajectory_%s.csv" % method),
            effective,
            header,
            extra={"budget": budget},
        )

        comparison = compare_trajectories(exact_forward, effective)
        write_csv(
            out / ("comparison_%s.csv" % method),
            header,
            ["time", "amplitude_error", "p_exact", "p_effective", "decay_law_error"],
            ([format_real(x) for x in row] for row in comparison.rows()),
        )

        report.append("%s: H = %s" % (method, FORMULAS[method]))
        report.append("  max |a_exact - a_eff| = %s" % format_real(comparison.max_amplitude_error))
        report.append("  max |p_exact - p_eff| = %s" % format_real(comparison.max_decay_law_error))
        worst = np.max(np.abs(1.0 - budget), initial=0.0)
        report.append("  max |1 - budget| = %s" % format_real(worst))

    _write_text(out / "report.txt", report)


def cmd_fl_estimate(config, out: pathlib.Path):
    model, params = model_from_config(config)
    if params is None:
        raise ConfigError("fl-estimate needs a friedrichs_lee model")

    analytic = fl_diag_difference_analytic(params)
    cross = fl_cross_validate(params, config.get("eta"))
    gamma = fl_gamma(params, params.m0, LOY_WEIGHT)
    coefficient = fl_estimate_kaon(1.0)

    rows = [
        ["exact", "closed form with square-root bracket"] + complex_cells(analytic["exact"]),
        ["approx2", "i (m21 G12 - m12 G21) / (4 (m0 - mu))"] + complex_cells(analytic["approx2"]),
        ["approx3", "(-Re m12 Im G12 + Im m12 Re G12) / (2 (m0 - mu))"]
        + complex_cells(analytic["approx3"]),
        ["approx4", "Im m12 (gamma_s - gamma_l) / (4 (m0 - mu))"]
        + complex_cells(analytic["approx4"]),
        ["numeric", "h11 - h22 of the improved Hamiltonian"] + complex_cells(cross["numeric"]),
        ["relative_gap", "|numeric - exact| / |exact|"] + complex_cells(cross["relative_gap"]),
        ["kaon_coefficient", "hbar / (4 tau_s (m_K - 2 m_pi)) in MeV per MeV"]
        + complex_cells(coefficient),
        ["kaon_estimate", "coefficient times Im m12 read in MeV"]
        + complex_cells(fl_estimate_kaon(params.m12.imag)),
    ]
    for i in range(2):
        for j in range(2):
            label = "gamma_%d%d" % (i + 1, j + 1)
            rows.append([label, "2 pi sum_n g_in g_jn* at m0"] + complex_cells(gamma[i, j]))

    header = {
        "units": UNITS,
        "eta": format_real(cross["eta"]),
        "grid_points": len(model.partition.perpendicular),
        "m0": format_real(params.m0),
        "mu": " ".join(format_real(x) for x in params.mu),
        "cutoff": format_real(params.cutoff),
        "formula": "h11 - h22 of the improved LOY Hamiltonian in the Friedrichs-Lee sector",
    }
    write_csv(out / "fl_estimate.csv", header, ["quantity", "formula", "re", "im"], rows)

    _write_text(
        out / "report.txt",
        [
            "Friedrichs-Lee estimate of h11 - h22 (improved LOY)",
            "  closed form:        %s" % _complex_text(analytic["exact"]),
            "  small |m12| form:   %s" % _complex_text(analytic["approx2"]),
            "  real form:          %s" % format_real(analytic["approx3"]),
            "  gamma_s form:       %s" % format_real(analytic["approx4"]),
            "  numeric:            %s" % _complex_text(cross["numeric"]),
            "  relative gap:       %s" % format_real(cross["relative_gap"]),
            "  kaon estimate:      %s x Im(m12)" % format_real(coefficient),
        ],
    )


def _complex_text(value) -> str:
    value = complex(value)
    return "%s%+si" % (format_real(value.real), format_real(value.imag))


def cmd_diagnose(config, out: pathlib.Path):
    model, _ = model_from_config(config)
    evaluator = SelfEnergyEvaluator.for_model(model, config.get("eta"))
    times = time_grid(config)
    psi0 = initial_state(config, model.dimension)

    report = diagnose_loy_conditions(model, psi0, times)

    write_csv(
        out / "diagnose.csv",
        _header(config, model, evaluator, formula="||PH1P psi_par|| / ||PH1Q psi_perp||"),
        ["time", "parallel_norm", "perpendicular_norm", "ratio", "violated", "weak_ratio"],
        (
            [format_real(t), format_real(a), format_real(b), format_real(r), int(v), format_real(w)]
            for t, a, b, r, v, w in report.rows()
        ),
    )

    lines = [
        "LOY condition ||PH1P psi_par|| << ||PH1Q psi_perp||, violated where the ratio >= 1",
        "  violated at %d of %d times"
        % (int(np.count_nonzero(report.violated)), len(report.times)),
    ]

    order = np.argsort(report.times)
    sorted_times = report.times[order]
    violated = report.violated[order]
    for i in range(1, len(sorted_times)):
        if violated[i - 1] and not violated[i] and sorted_times[i - 1] >= 0.0:
            crossing = locate_crossing(model, psi0, sorted_times[i - 1], sorted_times[i])
            lines.append("  ratio first drops below 1 at t* = %s" % format_real(crossing))
            break

    for name, ratios in sorted(check_ww_conditions(model).items()):
        lines.append("  weak coupling %s: max %s" % (name, format_real(np.max(ratios))))

    _write_text(out / "report.txt", lines)


COMMANDS = {
    "heff": cmd_heff,
    "evolve": cmd_evolve,
    "fl-estimate": cmd_fl_estimate,
    "diagnose": cmd_diagnose,
}


def cmd_sweep(config, out: pathlib.Path, run_action: str):
    entries = generate_sweep_entries(config)
    keys = sorted(config["sweep"]["parameters"])

    for name, entry, _ in entries:
        log("%s: %s", name, run_action)
        run_out = pathlib.Path(entry["output"])
        run_out.mkdir(parents=True, exist_ok=True)
        COMMANDS[run_action](entry, run_out)

    write_csv(
        out / "sweep_index.csv",
        {"action": run_action, "runs": len(entries)},
        ["name", "output", "seed"] + keys,
        (
            [name, entry["output"], entry["seed"]] + [repr(a[k]) for k in keys]
            for name, entry, a in entries
        ),
    )


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Effective Hamiltonians of unstable multi-level systems"
    )
    parser.add_argument("--config", required=True, help="Path to a YAML run configuration")
    parser.add_argument("--out", help="Output directory (overrides the configuration)")
    parser.add_argument("--eta", type=float, help="Resolvent regulator")
    parser.add_argument("--grid", type=int, help="Number of points per continuum grid")
    parser.add_argument("--seed", type=int, help="Seed for random model families")
    parser.add_argument(
        "--method",
        action="append",
        help="Effective Hamiltonian method to compute; may be repeated",
    )
    parser.add_argument(
        "--run",
        default="heff",
        choices=sorted(COMMANDS),
        help="Command executed for every sweep entry",
    )
    parser.add_argument("action", choices=ACTIONS)

    args = parser.parse_args(argv)
    action = args.action

    try:
        config = load_config(pathlib.Path(args.config))
        config = apply_overrides(
            config,
            eta=args.eta,
            grid=args.grid,
            seed=args.seed,
            methods=args.method,
            output=args.out,
        )
    except (ConfigError, OSError) as e:
        print("%s: configuration error: %s" % (action, e), file=sys.stderr)
        return 1

    out = pathlib.Path(config.get("output", "out"))
    out.mkdir(parents=True, exist_ok=True)

    with (out / "run.log").open("wb") as log_fh:
        set_logger(action, log_fh)
        log_raw(yaml.safe_dump(config, sort_keys=True).encode("utf-8"))
        try:
            if action == "sweep":
                cmd_sweep(config, out, args.run)
            else:
                COMMANDS[action](config, out)
        except ConfigError as e:
            log("configuration error: %s", e)
            return 1
        except NumericalError as e:
            log("numerical failure in %s: %s", e.method, e)
            return 2
        except ModelError as e:
            log("invalid model: %s", e)
            return 2
        finally:
            clear_logger()

    return 0


if __name__ == "__main__":
    sys.exit(main())
