""" regime-ensemble command line.

    regime-ensemble synth --output trace.csv [--labels regimes.csv] [--steps N]
    regime-ensemble train --input trace.csv --model model.json
    regime-ensemble forecast --input recent.csv --model model.json [--output forecast.csv]
    regime-ensemble evaluate --input trace.csv --model model.json [--labels regimes.csv] [--output DIR]
    regime-ensemble pairs --input trace.csv [--output DIR]
    regime-ensemble lambda-sweep --input trace.csv --lambdas 0,0.5,1 [--output DIR]

Exit status is 2 for usage and configuration errors and 1 for any other failure.

"""
import argparse
import logging
import os
import sys

import pandas as pd

from regime_ensemble.config import build_run_config
from regime_ensemble.ensemble import load_model, save_model
from regime_ensemble.errors import ConfigurationError, RegimeEnsembleError
from regime_ensemble.eval import pairs_frame
from regime_ensemble.files import atomic_write_frame
from regime_ensemble.ingest import (align_labels, read_regime_labels, read_trace_csv,
                                    reindex_and_fill, write_regime_labels)
from regime_ensemble.model.synth import generate_synthetic
from regime_ensemble.plots import forecast_figure, rank_histogram_figure, write_svg
from regime_ensemble.workflow import (compare_submodel_pairs, evaluate_model, forecast_latest,
                                      lambda_sweep, train_ensemble)

log = logging.getLogger(__name__)


def _require(cfg, *names):
    for name in names:
        if not getattr(cfg, name):
            raise ConfigurationError(name, "--%s is required for '%s'" % (name, cfg.command))


def _show(frame):
    print(frame.to_string(index=False, float_format=lambda v: '%.4f' % v))


def labels_path_for(trace_path):
    stem, _ = os.path.splitext(trace_path)
    return stem + '_regimes.csv'


#------------------------------------------------------------------------------
# Commands
#------------------------------------------------------------------------------

def cmd_synth(cfg):
    _require(cfg, 'output')
    trace, labels = generate_synthetic(cfg.synth)
    atomic_write_frame(trace.to_frame(), cfg.output)
    labels_path = cfg.labels or labels_path_for(cfg.output)
    atomic_write_frame(write_regime_labels(trace.timestamps, labels), labels_path)
    print("wrote %d minutes to %s and regime labels to %s" % (len(trace), cfg.output, labels_path))
    return 0


def cmd_train(cfg):
    _require(cfg, 'input', 'model')
    trace = read_trace_csv(cfg.input)
    result = train_ensemble(trace, cfg.ensemble_config())
    save_model(result.model, cfg.model)
    _show(result.summary())
    print("saved model to %s" % cfg.model)
    return 0


def cmd_forecast(cfg):
    _require(cfg, 'input', 'model')
    frame = forecast_latest(load_model(cfg.model), read_trace_csv(cfg.input))
    if cfg.output:
        atomic_write_frame(frame, cfg.output)
    else:
        sys.stdout.write(frame.to_csv(index=False, lineterminator='\n'))
    return 0


def _per_regime_frame(evaluation):
    rows = []
    for series, report in evaluation.one_step.items():
        for regime, sub in sorted(report.per_regime.items()):
            row = {'series': series, 'regime': regime.label}
            row.update(sub.as_row())
            rows.append(row)
    return pd.DataFrame(rows)


def cmd_evaluate(cfg):
    _require(cfg, 'input', 'model')
    model = load_model(cfg.model)
    trace = read_trace_csv(cfg.input)
    labels = None
    if cfg.labels:
        complete = reindex_and_fill(trace, model.config.baseline)
        labels = align_labels(complete, read_regime_labels(cfg.labels))
    evaluation = evaluate_model(model, trace, labels)
    summary = evaluation.summary()
    _show(summary)
    per_regime = _per_regime_frame(evaluation) if labels is not None else None
    if per_regime is not None and len(per_regime):
        _show(per_regime)
    if cfg.output:
        if 'csv' in cfg.emit:
            atomic_write_frame(evaluation.frame(), os.path.join(cfg.output, 'forecast.csv'))
            atomic_write_frame(summary, os.path.join(cfg.output, 'metrics.csv'))
            if per_regime is not None:
                atomic_write_frame(per_regime, os.path.join(cfg.output, 'per_regime.csv'))
        if 'svg' in cfg.emit:
            write_svg(forecast_figure(evaluation.frame()), os.path.join(cfg.output, 'forecast.svg'))
    return 0


def cmd_pairs(cfg):
    _require(cfg, 'input')
    results = compare_submodel_pairs(read_trace_csv(cfg.input), cfg.ensemble_config(), cfg.mlp)
    frame = pairs_frame(results)
    _show(frame)
    if cfg.output:
        if 'csv' in cfg.emit:
            atomic_write_frame(frame, os.path.join(cfg.output, 'pairs.csv'))
        if 'svg' in cfg.emit:
            for result in results:
                if result.talagrand is not None:
                    name = '-'.join(result.pair)
                    write_svg(rank_histogram_figure(result.talagrand, name),
                              os.path.join(cfg.output, 'rank_%s.svg' % name))
    failed = [r for r in results if r.error]
    return 1 if failed else 0


def cmd_lambda_sweep(cfg):
    _require(cfg, 'input')
    frame = lambda_sweep(read_trace_csv(cfg.input), cfg.ensemble_config(), cfg.lambdas)
    _show(frame)
    if cfg.output and 'csv' in cfg.emit:
        atomic_write_frame(frame, os.path.join(cfg.output, 'lambda_sweep.csv'))
    return 0


COMMANDS = {
    'synth': (cmd_synth, "write a synthetic regime-switching trace and its regime labels"),
    'train': (cmd_train, "train both submodels and the gate, save the ensemble model"),
    'forecast': (cmd_forecast, "forecast the next H minutes after the end of a trace"),
    'evaluate': (cmd_evaluate, "evaluate a saved model on the test split of a trace"),
    'pairs': (cmd_pairs, "rank-histogram comparison of every submodel pair"),
    'lambda-sweep': (cmd_lambda_sweep, "test errors of the gate for several lambda values"),
}


#------------------------------------------------------------------------------
# Argument parsing
#------------------------------------------------------------------------------

def _comma_list(convert):
    def parse(text):
        try:
            return tuple(convert(v) for v in text.split(',') if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError("invalid list %r" % text)
    return parse


def _add_common(parser):
    parser.add_argument('--config', help="YAML file with options and hyper-parameter blocks")
    parser.add_argument('--input', help="telemetry CSV")
    parser.add_argument('--output', help="output file or directory")
    parser.add_argument('--model', help="model file")
    parser.add_argument('--labels', help="regime label CSV (timestamp,regime)")
    parser.add_argument('--window', type=int, help="history window W in minutes")
    parser.add_argument('--horizon', type=int, help="forecast horizon H in minutes")
    parser.add_argument('--lambda', dest='lam', type=float, help="weight-supervision strength")
    parser.add_argument('--lambdas', type=_comma_list(float), help="comma separated lambda values")
    parser.add_argument('--seed', type=int, help="seed for every randomized stage")
    parser.add_argument('--emit', type=_comma_list(str), help="artifacts to write: csv,svg")
    parser.add_argument('--exog-only', dest='exog_only', action='store_const', const=True,
                        help="feed gbdt only the exogenous window")
    parser.add_argument('--steps', type=int, help="length of a synthetic trace in minutes")


def build_parser():
    parser = argparse.ArgumentParser(prog='regime-ensemble',
                                     description="Regime-adaptive ensemble load forecasting")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    parser.add_argument('-q', '--quiet', action='store_true', help="warnings and errors only")
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    func, _ = COMMANDS[args.command]
    try:
        cfg = build_run_config(args.command, args.config,
                               input=args.input, output=args.output, model=args.model,
                               labels=args.labels, window=args.window, horizon=args.horizon,
                               lam=args.lam, lambdas=args.lambdas, seed=args.seed,
                               emit=args.emit, exog_only=args.exog_only)
        if args.steps is not None:
            cfg.synth.n_steps = args.steps
            cfg.synth.validate()
        return func(cfg)
    except ConfigurationError as e:
        print("regime-ensemble: error: %s" % e, file=sys.stderr)
        return 2
    except (RegimeEnsembleError, OSError) as e:
        log.debug("command failed", exc_info=True)
        print("regime-ensemble: error: %s" % e, file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
