#!/usr/bin/env python
from cleo import Command, Application
from clikit.api.args.exceptions import CannotParseArgsException, NoSuchArgumentException, NoSuchOptionException
from pathlib import Path

import logging

from crashsurrogate import __version__
from crashsurrogate.api import pipeline
from crashsurrogate.cli.manifest import RunManifest
from crashsurrogate.helpers.config import config_file, write_default_config
from crashsurrogate.helpers.errors import ConfigError, CrashSurrogateError, SplitError
from crashsurrogate.metrics.splits import DEFAULT_KS_THRESHOLD, SPLITS
from crashsurrogate.oracle.dataset import MANIFEST_NAME, dataset_container, load_dataset

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

USAGE_ERRORS = (CannotParseArgsException, NoSuchArgumentException, NoSuchOptionException)


class PipelineCommand(Command):
    """Maps errors onto exit codes: 1 for runtime failures, 2 for bad input"""

    def handle(self):  # type: () -> Optional[int]
        if self.io.is_verbose():
            logging.getLogger('crashsurrogate').setLevel(logging.DEBUG)

        try:
            return self.run_step() or EXIT_OK
        except (ConfigError, FileNotFoundError) as e:
            self.line_error(f'Error: {e}', style='error')
            return EXIT_USAGE
        except SplitError as e:
            self.line_error(f'Error: {e}', style='error')
            return EXIT_FAILURE
        except (CrashSurrogateError, RuntimeError, ValueError, OSError) as e:
            log.debug('Pipeline step failed', exc_info=True)
            self.line_error(f'Error: {type(e).__name__}: {e}', style='error')
            return EXIT_FAILURE

    def run_step(self):
        raise NotImplementedError

    def _convert(self, name, kind):
        value = self.option(name)
        if value is None or value == '':
            return None

        try:
            return kind(value)
        except ValueError:
            raise ConfigError(f'--{name}={value} is not a valid {kind.__name__}')

    def int_option(self, name):
        return self._convert(name, int)

    def float_option(self, name):
        return self._convert(name, float)

    def path_argument(self, name, must_exist=True):
        path = Path(self.argument(name))
        if must_exist and not path.exists():
            raise FileNotFoundError(f'{path.absolute()} does not exist')

        return path

    def subset_option(self):
        subset = self.option('subset')
        if subset and subset not in SPLITS:
            raise ConfigError(f'--subset={subset} invalid, choose one of: {", ".join(SPLITS)}')

        return subset or None

    def selected_references(self, dataset):
        split = self.option('split') or pipeline.default_split_path(dataset)
        return pipeline.select(load_dataset(dataset), split, self.subset_option(), pipeline.parse_ids(self.option('samples')))


class Config(Command):
    """
    Shows the apps config

    config
        {--refresh : Replace current config with default config}
    """
    def handle(self):  # type: () -> Optional[int]
        self.write(f'Config location: {config_file.absolute()}\n\n')

        if self.option('refresh'):
            write_default_config()

        with open(config_file, 'r') as fh:
            self.write(fh.read())


class ListFamilies(Command):
    """
    Shows the model families with their L_pre+L_attn+L_post stage counts

    families
    """
    def handle(self):  # type: () -> Optional[int]
        for name, stages in pipeline.list_model_families().items():
            self.line(f'{name}: {stages}')


class Generate(PipelineCommand):
    """
    Samples designs by Latin hypercube and simulates them with the lattice oracle.

    generate
        {out : Output directory for the trajectory container, design table and dataset manifest}
        {--n=20 : Number of designs}
        {--seed=0 : LHS seed}
        {--config= : YAML file with oracle: and bounds: sections}
        {--jobs= : Parallel simulations, defaults to the app config}
    """

    def run_step(self):
        out = Path(self.argument('out'))
        n, seed = self.int_option('n'), self.int_option('seed')
        config_path = self.option('config') or None

        run = RunManifest('generate', {'n': n, 'config_file': config_path}, {'lhs': seed}, inputs=[config_path] if config_path else [])
        dataset = pipeline.generate(out, n=n, seed=seed, config_path=config_path, n_jobs=self.int_option('jobs'))
        run.config.update({'oracle_config': dataset['oracle_config'], 'design_bounds': dataset['design_bounds']})
        run.outputs = [out / name for name in dataset['files']] + [out / MANIFEST_NAME]
        run.write(out)

        self.line(f'Wrote {n} trajectories to {out}')


class Split(PipelineCommand):
    """
    DOE-aware train / val / test split with KS and Wasserstein-1 diagnostics.

    split
        {dataset : Dataset directory}
        {--out= : Output directory, defaults to the dataset directory}
        {--ratios=0.6,0.2,0.2 : train,val,test ratios}
        {--seed=0 : Split seed}
        {--ks-threshold= : Acceptance threshold on the max pairwise KS statistic}
        {--max-retries=20 : Seeds to try before giving up}
        {--allow-best : Accept the best split found even when it misses the threshold}
    """

    def run_step(self):
        dataset = self.path_argument('dataset')
        out = Path(self.option('out') or (dataset if dataset.is_dir() else dataset.parent))
        ratios = pipeline.parse_ratios(self.option('ratios'))
        seed = self.int_option('seed')
        threshold = self.float_option('ks-threshold')
        threshold = DEFAULT_KS_THRESHOLD if threshold is None else threshold

        run = RunManifest('split', {'ratios': ratios, 'ks_threshold': threshold}, {'split': seed}, inputs=[dataset_container(dataset)])
        report = pipeline.split_dataset(dataset, ratios=ratios, seed=seed, ks_threshold=threshold,
                                        max_retries=self.int_option('max-retries'), allow_best=self.option('allow-best'))
        run.seeds['used'] = report.seed
        run.outputs = report.write(out)
        run.write(out)

        counts = report.counts()
        status = 'passed' if report.passed else 'FAILED'
        self.line(f'Split {counts["train"]}/{counts["val"]}/{counts["test"]}, max KS {report.max_ks:.3f} ({status} at {threshold})')


class Train(PipelineCommand):
    """
    Trains one model family with full-rollout loss and early stopping on the validation split.

    train
        {dataset : Dataset directory}
        {out : Output directory for best.npz, history.csv and train_config.yml}
        {--split= : split.json, defaults to the one in the dataset directory}
        {--config= : YAML file with TrainConfig keys}
        {--family= : Model family, see the families command}
        {--scale= : desk or full}
        {--epochs= : Maximum epochs}
        {--lr= : Initial learning rate}
        {--patience= : Early-stopping patience in epochs}
        {--seed= : Model and shuffle seed}
        {--truncation-window= : Detach the rollout state every this many steps}
        {--contact-radius= : Contact search radius, defaults to 3x the median edge length}
        {--contact-k= : Contact partners kept per node}
        {--contact-alpha-init= : Initial contact residual gate}
        {--jobs= : Parallel validation rollouts}
    """

    def run_step(self):
        dataset = self.path_argument('dataset')
        out = Path(self.argument('out'))
        split = Path(self.option('split') or pipeline.default_split_path(dataset))
        config_path = self.option('config') or None

        overrides = {
            'family': self.option('family') or None,
            'scale': self.option('scale') or None,
            'epochs': self.int_option('epochs'),
            'lr': self.float_option('lr'),
            'patience': self.int_option('patience'),
            'seed': self.int_option('seed'),
            'truncation_window': self.int_option('truncation-window'),
            'n_jobs': self.int_option('jobs'),
            'contact_radius': self.float_option('contact-radius'),
            'contact_k': self.int_option('contact-k'),
            'contact_alpha_init': self.float_option('contact-alpha-init'),
        }

        inputs = [dataset_container(dataset), split] + ([config_path] if config_path else [])
        run = RunManifest('train', {k: v for k, v in overrides.items() if v is not None}, inputs=inputs)
        result = pipeline.train_family(dataset, out, split_path=split, config_path=config_path, **overrides)

        run.config['model'] = result.model.config.to_dict()
        run.seeds['train'] = result.model.config.seed
        run.outputs = result.artifacts
        run.write(out)

        self.line(f'Best validation loss {result.best_val_loss:.6g} mm^2 at epoch {result.best_epoch}, checkpoint {result.checkpoint}')


class Rollout(PipelineCommand):
    """
    Closed-loop rollouts from a checkpoint, written as a trajectory container plus per-step RMSE.

    rollout
        {checkpoint : Checkpoint .npz, or drift for the zero-acceleration baseline}
        {dataset : Dataset directory}
        {out : Output directory}
        {--split= : split.json, defaults to the one in the dataset directory}
        {--subset= : Only roll out this split (train, val or test)}
        {--samples= : Comma separated sample ids}
        {--jobs= : Parallel rollouts}
    """

    def run_step(self):
        checkpoint = self.argument('checkpoint')
        dataset = self.path_argument('dataset')
        out = Path(self.argument('out'))
        out.mkdir(parents=True, exist_ok=True)

        run = RunManifest('rollout', {'checkpoint': checkpoint, 'subset': self.option('subset'), 'samples': self.option('samples')},
                          inputs=[dataset_container(dataset)] + ([] if checkpoint == pipeline.DRIFT else [checkpoint]))
        references = self.selected_references(dataset)
        results, steps = pipeline.rollout_samples(checkpoint, references, n_jobs=self.int_option('jobs'))

        container = pipeline.write_predictions(results, out)
        steps.to_csv(out / 'rollout_rmse.csv', index=False, float_format='%.17g')
        run.outputs = [container, out / 'rollout_rmse.csv']
        run.write(out)

        self.line(f'Rolled out {len(results)} samples to {container}')


class Evaluate(PipelineCommand):
    """
    RMSE and survival-space metrics of a checkpoint or of stored predictions.

    evaluate
        {dataset : Dataset directory with the reference trajectories}
        {out : Output directory for eval_steps.csv, eval_samples.csv and eval_summary.json}
        {--checkpoint= : Checkpoint .npz, or drift, to roll out}
        {--predictions= : Trajectory container with stored predictions}
        {--split= : split.json, defaults to the one in the dataset directory}
        {--subset= : Only evaluate this split (train, val or test)}
        {--samples= : Comma separated sample ids}
        {--label= : Label in the summary}
        {--jobs= : Parallel rollouts}
    """

    def run_step(self):
        dataset = self.path_argument('dataset')
        out = Path(self.argument('out'))
        checkpoint = self.option('checkpoint') or None
        predictions = self.option('predictions') or None
        if predictions is not None:
            predictions = dataset_container(predictions)

        inputs = [dataset_container(dataset)] + [p for p in (checkpoint, predictions) if p and p != pipeline.DRIFT]
        run = RunManifest('evaluate', {'checkpoint': checkpoint, 'predictions': str(predictions) if predictions else None,
                                       'subset': self.option('subset'), 'samples': self.option('samples')}, inputs=inputs)

        report = pipeline.evaluate_samples(self.selected_references(dataset), checkpoint=checkpoint, predictions=predictions,
                                           label=self.option('label') or None, n_jobs=self.int_option('jobs'))
        run.outputs = report.write(out)
        run.write(out)

        summary = report.summary()
        self.line(f'{summary["label"]}: RMSE_mu {summary["rmse_mu"]:.4g} mm, RMSE_final {summary["rmse_final_mean"]:.4g} '
                  f'+- {summary["rmse_final_std"]:.4g} mm, e_surv_T {summary["e_surv_final_mean"]:.4g} +- {summary["e_surv_final_std"]:.4g} mm')


class Report(PipelineCommand):
    """
    SVG plots of an evaluation: RMSE per step, survival distance over time and the final survival scatter.

    report
        {eval_dir : Directory written by the evaluate command}
        {--out= : Output directory, defaults to eval_dir}
        {--prefix=eval : File prefix of the evaluation tables}
    """

    def run_step(self):
        eval_dir = self.path_argument('eval_dir')
        out = Path(self.option('out') or eval_dir)

        steps_file, plots = pipeline.report_plots(eval_dir, out, prefix=self.option('prefix'))
        run = RunManifest('report', {'prefix': self.option('prefix')}, inputs=[steps_file], outputs=plots)
        run.write(out)

        for path in plots:
            self.line(f'Wrote {path}')


class Bench(PipelineCommand):
    """
    Times one full rollout per design for the drift baseline and every checkpoint against the oracle.

    bench
        {dataset : Dataset directory}
        {out : Output directory for bench_samples.csv and bench_summary.csv}
        {--checkpoint=* : Checkpoint .npz to time, can be repeated}
        {--split= : split.json, defaults to the one in the dataset directory}
        {--subset= : Only time this split (train, val or test)}
        {--samples= : Comma separated sample ids}
        {--repeats=1 : Timing repeats per design, the fastest counts}
        {--no-oracle : Do not time the oracle}
    """

    def run_step(self):
        dataset = self.path_argument('dataset')
        out = Path(self.argument('out'))
        out.mkdir(parents=True, exist_ok=True)
        checkpoints = list(self.option('checkpoint') or [])

        run = RunManifest('bench', {'checkpoints': checkpoints, 'repeats': self.int_option('repeats')},
                          inputs=[dataset_container(dataset), *checkpoints])
        table, summary = pipeline.bench(dataset, checkpoints, references=self.selected_references(dataset),
                                        repeats=self.int_option('repeats'), oracle=not self.option('no-oracle'))

        table.to_csv(out / 'bench_samples.csv', index=False, float_format='%.6g')
        summary.to_csv(out / 'bench_summary.csv', index=False, float_format='%.6g')
        run.outputs = [out / 'bench_samples.csv', out / 'bench_summary.csv']
        run.write(out)

        self.line(summary.to_string(index=False))


class Contacts(PipelineCommand):
    """
    Writes the contact set of one sample at one rollout step as CSV (i, j, distance, gap).

    contacts
        {dataset : Dataset directory}
        {out : Output directory}
        {--sample= : Sample id, defaults to the first sample}
        {--step=0 : Rollout step}
        {--checkpoint= : Use this model's rollout geometry and contact parameters}
        {--contact-radius= : Search radius, defaults to 3x the median edge length}
        {--contact-k= : Partners kept per node}
    """

    def run_step(self):
        dataset = self.path_argument('dataset')
        out = Path(self.argument('out'))
        sample = self.int_option('sample')
        if sample is None:
            sample = load_dataset(dataset)[0].sample_id
        step = self.int_option('step')
        checkpoint = self.option('checkpoint') or None

        run = RunManifest('contacts', {'sample': sample, 'step': step, 'checkpoint': checkpoint},
                          inputs=[dataset_container(dataset)] + ([checkpoint] if checkpoint and checkpoint != pipeline.DRIFT else []))
        frame = pipeline.contact_dump(dataset, sample, step=step, checkpoint=checkpoint,
                                      radius=self.float_option('contact-radius'), k=self.int_option('contact-k'))

        out.mkdir(parents=True, exist_ok=True)
        path = out / f'contacts_{sample}_{step}.csv'
        frame.to_csv(path, index=False, float_format='%.17g')
        run.outputs = [path]
        run.write(out)

        self.line(f'{len(frame)} contact pairs written to {path}')


commands = (Config, ListFamilies, Generate, Split, Train, Rollout, Evaluate, Report, Bench, Contacts)


class CrashSurrogateApplication(Application):
    def exception_to_exit_code(self, e):
        # unknown flags and malformed arguments fail before a command runs
        if isinstance(e, USAGE_ERRORS):
            return EXIT_USAGE

        return super().exception_to_exit_code(e)


def build_application():
    application = CrashSurrogateApplication(name='crash-surrogate', version=__version__)
    for command in commands:
        application.add(command())

    return application


def run():
    logging.basicConfig(format='%(message)s', level=logging.INFO)

    build_application().run()


if __name__ == '__main__':
    run()
