"""
LÍNEA DE COMANDOS
Responsabilidad: Exponer simulate / fit / summarize / plot sobre los módulos.
Códigos de salida: 0 éxito, 1 falla en ejecución, 2 uso o configuración inválida.
"""
import argparse
import logging
import os
import sys

from modules.config import EstimatorConfig
from modules.engine import DoseResponseEngine, summarize
from modules.errors import ConfigError, DoseResponseError, PanelError, SamplesFormatError
from modules.gps import GpsKind
from modules.repository import (
    FORMATO_NUMERO,
    load_model_config,
    load_panel_for_run,
    load_run_config,
    read_apo_samples,
    write_apo_outputs,
    write_json,
)
from modules.simulation import DgpSpec, SimulationConfig, run_replications
from modules.svg import write_svg

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

EJEMPLOS = {"1": "one", "2": "two"}


def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_simulate(args):
    if args.config:
        cfg = load_model_config(args.config, SimulationConfig)
    else:
        estimator = EstimatorConfig(
            method=args.method,
            resampler=args.resampler,
            alpha=args.alpha,
            j_target=args.j_target,
            n_draws=args.draws,
            seed=args.seed,
            gps_kind=args.gps_kind,
        )
        dgp = DgpSpec(example=EJEMPLOS[args.example], n=args.n, K=args.K, seed=args.seed,
                      second_param=args.second_param)
        cfg = SimulationConfig(dgp=dgp, estimator=estimator, replicates=args.replicates)

    out = _out_dir(args.out)
    report = run_replications(cfg.dgp, cfg.estimator, cfg.replicates, n_jobs=args.threads)
    report.to_csv(os.path.join(out, "simreport.csv"))
    write_json(cfg.to_json_dict(), os.path.join(out, "resolved-config.json"))
    if report.reference is not None:
        logger.info("Valores de referencia para %s-%s: %s", cfg.estimator.method, cfg.estimator.resampler, report.reference)
    print(report.frame.to_string(index=False))
    return EXIT_OK


def cmd_fit(args):
    cfg = load_run_config(args.config)
    data, resolved = load_panel_for_run(args.data, cfg)
    out = _out_dir(args.out)

    apo = DoseResponseEngine(resolved.estimator, n_jobs=args.threads).ejecutar(data)
    write_apo_outputs(
        apo,
        os.path.join(out, resolved.outputs.samples),
        os.path.join(out, resolved.outputs.summary),
    )
    write_json(resolved.to_json_dict(), os.path.join(out, resolved.outputs.resolved))
    print(summarize(apo).to_string(index=False))
    return EXIT_OK


def _summary_from_samples(path):
    apo = read_apo_samples(path)
    try:
        return summarize(apo)
    except ValueError as exc:
        raise SamplesFormatError(f"{path}: {exc}") from exc


def cmd_summarize(args):
    summary = _summary_from_samples(args.samples)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.samples)), "apo_summary.csv")
    summary.to_csv(out, index=False, float_format=FORMATO_NUMERO)
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_plot(args):
    summary = _summary_from_samples(args.samples)
    write_svg(summary, args.out)
    logger.info("Gráfico escrito en %s", args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dose-response", description="Estimación Bayesiana dosis-respuesta longitudinal")
    parser.add_argument("--verbose", action="store_true", help="Log en nivel DEBUG")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="Procesos para los draws del posterior")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Estudio de simulación (ejemplos 1 y 2)")
    sim.add_argument("--example", choices=sorted(EJEMPLOS), default="1")
    sim.add_argument("--method", choices=["cov", "wor"], default="cov")
    sim.add_argument("--resampler", choices=["bb", "dp"], default="dp")
    sim.add_argument("--replicates", type=int, default=200)
    sim.add_argument("--draws", type=int, default=500)
    sim.add_argument("--alpha", type=float, default=5.0)
    sim.add_argument("--j-target", dest="j_target", type=int, default=500)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--K", type=int, default=10)
    sim.add_argument("--second-param", dest="second_param", choices=["variance", "sd"], default="variance")
    sim.add_argument(
        "--gps-kind", dest="gps_kind", choices=[k.value for k in GpsKind], default=GpsKind.GEE.value,
        help="Modelo del tratamiento para el GPS; random_intercept ajusta el GPS de efectos mixtos "
        "con BLUP por unidad (el usado en el estudio con DP)",
    )
    sim.add_argument("--config", help="resolved-config.json de una corrida previa")
    sim.add_argument("--out", default=".")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="Posterior del APO sobre un panel CSV")
    fit.add_argument("--data", required=True)
    fit.add_argument("--config", required=True)
    fit.add_argument("--out", default=".")
    fit.set_defaults(func=cmd_fit)

    summ = sub.add_parser("summarize", help="Recalcula apo_summary.csv desde apo_samples.csv")
    summ.add_argument("--samples", required=True)
    summ.add_argument("--out")
    summ.set_defaults(func=cmd_summarize)

    plot = sub.add_parser("plot", help="Curva SVG desde apo_samples.csv")
    plot.add_argument("--samples", required=True)
    plot.add_argument("--out", default="curve.svg")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, PanelError, SamplesFormatError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except ValueError as exc:
        # Valores fuera de rango al construir configuraciones desde flags
        logger.error("Argumentos inválidos: %s", exc)
        return EXIT_USAGE
    except DoseResponseError as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
