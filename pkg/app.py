#!/usr/bin/env python3
"""
ForestAlign - targetless forest point-cloud co-registration
Commands:
 - register: align a source cloud to a target cloud, write transform.json
 - synth:    generate a synthetic forest view pair with its ground truth
 - eval:     random-perturbation trials over a pair, trials.csv + summary.json
 - inspect:  JSON summary of one cloud (bounds, labels, complexity levels)

Exit codes: 0 ok, 1 I/O / parse / usage, 2 no overlap, 3 data cannot be grouped.
"""

import os
import sys
import json
import argparse
import logging
from dataclasses import asdict
from typing import Dict, List, Optional

import numpy as np

from forestalign import __version__
from forestalign.config import (DEFAULT_CAPTURE_SHIFT, DEFAULT_MAX_CORR_DIST, DEFAULT_RADIUS,
                                DEFAULT_REFINE_VOXEL, DEFAULT_SEED, DEFAULT_VOXEL, K_TLS,
                                ForestAlignConfig, IcpConfig, configure_logging)
from forestalign.errors import (DATA_ERRORS, OVERLAP_ERRORS, DegenerateNeighborhoodError,
                                ForestAlignError)
from forestalign.evaluation import TrialSpec, compare_methods, run_trials
from forestalign.geometry import RigidTransform, apply_transform, voxel_downsample
from forestalign.normals import estimate_normals
from forestalign.records import TransformRecord, write_json, write_summary_json, write_trials_csv
from forestalign.registration import RegistrationResult, forest_align
from forestalign.scene import (SceneSpec, label_counts, make_view_pair, sparsify_as_als,
                               synth_forest_scene, thin_surface_fuels)
from forestalign.vmf import fit_vmf_mixture, structural_complexity
from cloud_formats import read_cloud, write_cloud

EXIT_OK = 0
EXIT_IO = 1
EXIT_NO_OVERLAP = 2
EXIT_DATA = 3

# grass density used when a burn pair is requested
BURN_GRASS_DENSITY = 10.0


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here are exit 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"❌ {self.prog}: {message}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def say(message: str):
    print(message, file=sys.stderr)


def exit_code_for(error: Exception) -> int:
    if isinstance(error, OVERLAP_ERRORS):
        return EXIT_NO_OVERLAP
    if isinstance(error, DATA_ERRORS + (DegenerateNeighborhoodError,)):
        return EXIT_DATA
    return EXIT_IO


def config_from_args(args) -> ForestAlignConfig:
    return ForestAlignConfig(
        voxel=args.voxel,
        refine_voxel=args.refine_voxel,
        radius=args.radius,
        k_source=args.k_source,
        k_target=args.k_target,
        icp=IcpConfig(max_corr_dist=args.max_corr_dist),
        seed=args.seed,
        capture=not args.no_capture,
        capture_shift=args.capture_shift,
    ).validate()


def add_pipeline_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--k-source', type=int, default=K_TLS, help='complexity levels in the source')
    parser.add_argument('--k-target', type=int, default=K_TLS, help='complexity levels in the target')
    parser.add_argument('--voxel', type=float, default=DEFAULT_VOXEL, help='coarse voxel size (m)')
    parser.add_argument('--refine-voxel', type=float, default=DEFAULT_REFINE_VOXEL,
                        help='voxel size of the final refinement (m)')
    parser.add_argument('--radius', type=float, default=DEFAULT_RADIUS, help='normal estimation radius (m)')
    parser.add_argument('--max-corr-dist', type=float, default=DEFAULT_MAX_CORR_DIST,
                        help='ICP correspondence threshold (m)')
    parser.add_argument('--capture-shift', type=float, default=DEFAULT_CAPTURE_SHIFT,
                        help='largest horizontal offset the coarse capture searches (m)')
    parser.add_argument('--no-capture', action='store_true',
                        help='start the level stages from identity, without the coarse capture')
    parser.add_argument('--seed', type=int, default=DEFAULT_SEED)


def registration_report(result: RegistrationResult, cfg: ForestAlignConfig) -> Dict:
    d = result.diagnostics
    return {
        'converged': result.converged,
        'overlap_percent': d.overlap_percent,
        'inlier_rmse': d.inlier_rmse,
        'iterations': d.iterations,
        'assignment': {
            'sigma': {str(s): t for s, t in d.assignment.matched_levels()},
            'cost': d.assignment.cost,
            'unmatched_source': list(d.assignment.unmatched_source),
            'unmatched_target': list(d.assignment.unmatched_target),
        },
        'source': {'sc': d.source_profile.sc.tolist(), 'group_sizes': d.source_profile.group_sizes.tolist(),
                   'kappas': list(d.source_kappas)},
        'target': {'sc': d.target_profile.sc.tolist(), 'group_sizes': d.target_profile.group_sizes.tolist(),
                   'kappas': list(d.target_kappas)},
        'per_level': [
            {'stage': level.stage, 'source_level': level.source_level, 'target_level': level.target_level,
             'inlier_rmse': level.inlier_rmse, 'iterations': level.iterations,
             'n_source': level.n_source, 'n_target': level.n_target,
             'matrix': level.transform.matrix.tolist()}
            for level in result.per_level
        ],
        'capture': None if d.capture is None else {
            'tilt': d.capture.tilt, 'yaw': d.capture.yaw, 'shift': list(d.capture.shift),
            'score': d.capture.score, 'overlap_cells': d.capture.overlap_cells,
            'matrix': d.capture.transform.matrix.tolist(),
        },
        'config': cfg.to_dict(),
        'config_hash': cfg.config_hash(),
        'tool_version': __version__,
        'metadata': {'wall_time': d.wall_time},
    }


def cmd_register(args) -> int:
    cfg = config_from_args(args)
    source = read_cloud(args.source)
    target = read_cloud(args.target)
    say(f"🌲 Registering {args.source} ({source.count} pts) -> {args.target} ({target.count} pts)")

    result = forest_align(source, target, cfg)
    for level in result.per_level:
        say(f"   • {level.stage}: inlier RMSE {level.inlier_rmse:.4f} m, {level.iterations} iterations")
    if not result.converged:
        say("   ⚠️  Final refinement stopped at its iteration cap")

    TransformRecord(result.final, args.source, args.target, cfg.config_hash()).write(args.out)
    say(f"✅ Transform written to {args.out}")
    if args.aligned_out:
        write_cloud(args.aligned_out, apply_transform(source, result.final))
        say(f"✅ Aligned source written to {args.aligned_out}")
    if args.report:
        write_json(args.report, registration_report(result, cfg))
        say(f"📋 Report written to {args.report}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if not 0.0 < args.overlap <= 1.0:
        raise UsageError(f"--overlap must be in (0, 1], got {args.overlap}")
    if args.burn_keep is not None and not 0.0 <= args.burn_keep <= 1.0:
        raise UsageError(f"--burn-keep must be in [0, 1], got {args.burn_keep}")

    spec = SceneSpec(
        extent=args.extent,
        ground_amplitude=args.ground_amplitude,
        n_trees=args.trees,
        grass_density=BURN_GRASS_DENSITY if args.burn_keep is not None else 0.0,
        seed=args.seed,
    )
    say(f"🌲 Synthesizing {args.extent:g} m scene with {args.trees} trees (seed {args.seed})")
    scene = synth_forest_scene(spec)
    truth = RigidTransform.from_euler(0.0, 0.0, args.yaw, args.offset)
    pair = make_view_pair(scene, args.overlap, truth, seed=args.seed)

    target = pair.target
    if args.als_target:
        target = sparsify_as_als(target, seed=args.seed)
        say(f"   • Target thinned to an aerial-like view: {target.count} points")
    if args.burn_keep is not None:
        target = thin_surface_fuels(target, args.burn_keep, seed=args.seed)
        say(f"   • Target grass thinned to {args.burn_keep:.0%}: {target.count} points")

    source_path = os.path.join(args.out_dir, 'source.ply')
    target_path = os.path.join(args.out_dir, 'target.ply')
    truth_path = os.path.join(args.out_dir, 'truth.json')
    write_cloud(source_path, pair.source)
    write_cloud(target_path, target)
    TransformRecord(pair.truth, source_path, target_path, extra={
        'scene': asdict(spec),
        'scan_pose': truth.to_euler6().tolist(),
        'overlap': args.overlap,
        'als_target': args.als_target,
        'burn_keep': args.burn_keep,
        'labels': {'source': label_counts(pair.source), 'target': label_counts(target)},
    }).write(truth_path)
    say(f"✅ Wrote {source_path} ({pair.source.count} pts), {target_path} ({target.count} pts), {truth_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = config_from_args(args)
    spec = TrialSpec(args.rot_range, args.trans_range, args.trials, args.seed)
    try:
        spec.validate()
    except ForestAlignError as e:
        raise UsageError(str(e))
    source = read_cloud(args.source)
    target = read_cloud(args.target)
    truth = TransformRecord.read(args.truth).transform
    say(f"🎲 {args.trials} trials, ±{args.rot_range:g}° / ±{args.trans_range:g} m (seed {args.seed})")

    if args.compare_plain:
        reports = compare_methods(source, target, truth, spec, cfg)
    else:
        reports = {'forest_align': run_trials(source, target, truth, spec, cfg)}

    for method, report in reports.items():
        suffix = '' if method == 'forest_align' else f'_{method}'
        trials_path = os.path.join(args.out_dir, f'trials{suffix}.csv')
        summary_path = os.path.join(args.out_dir, f'summary{suffix}.json')
        write_trials_csv(trials_path, report)
        write_summary_json(summary_path, report, extra={'config_hash': cfg.config_hash(),
                                                        'trial_spec': asdict(spec)})
        rmse = ', '.join(f"{name} {value:.3f}" for name, value in report.rmse_dict().items())
        say(f"📋 {method}: {report.n_failed}/{len(report.rows)} failed; RMSE {rmse}")
        say(f"✅ Wrote {trials_path} and {summary_path}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    cloud = read_cloud(args.cloud)
    lower, upper = cloud.bounds()
    summary = {
        'path': args.cloud,
        'count': cloud.count,
        'bounds': {'min': lower.tolist(), 'max': upper.tolist()},
        'labels': label_counts(cloud),
    }
    if args.k:
        coarse = voxel_downsample(cloud, args.voxel)
        normals = estimate_normals(coarse, args.radius)
        mixture = fit_vmf_mixture(normals, args.k, args.seed)
        profile = structural_complexity(normals, mixture)
        summary['levels'] = [
            {'level': level, 'kappa': float(kappa), 'sc': float(sc), 'size': int(size)}
            for level, (kappa, sc, size) in enumerate(
                zip(mixture.kappas, profile.sc, profile.group_sizes), start=1)
        ]
        summary['downsampled_count'] = coarse.count
        summary['valid_normals'] = normals.valid_count
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog='forestalign', description='Targetless forest point-cloud co-registration')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', default=None, help='overrides FORESTALIGN_LOG_LEVEL')
    parser.add_argument('--log-file', default=None, help='overrides FORESTALIGN_LOG_FILE')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=CliParser)

    register = commands.add_parser('register', help='align source to target')
    register.add_argument('--source', required=True)
    register.add_argument('--target', required=True)
    register.add_argument('--out', default='transform.json')
    register.add_argument('--aligned-out', default=None, help='write the transformed source here')
    register.add_argument('--report', default=None, help='write per-level diagnostics here')
    add_pipeline_flags(register)
    register.set_defaults(handler=cmd_register)

    synth = commands.add_parser('synth', help='generate a synthetic view pair')
    synth.add_argument('--trees', type=int, default=30)
    synth.add_argument('--extent', type=float, default=100.0)
    synth.add_argument('--ground-amplitude', type=float, default=2.0)
    synth.add_argument('--overlap', type=float, default=0.6)
    synth.add_argument('--yaw', type=float, default=10.0, help='ground-truth yaw (degrees)')
    synth.add_argument('--offset', type=float, nargs=3, default=(2.0, -1.0, 0.5), metavar=('TX', 'TY', 'TZ'),
                       help='ground-truth translation (m)')
    synth.add_argument('--als-target', action='store_true', help='thin the target to an aerial-like view')
    synth.add_argument('--burn-keep', type=float, default=None,
                       help='add grass and keep this fraction of it in the target')
    synth.add_argument('--seed', type=int, default=DEFAULT_SEED)
    synth.add_argument('--out-dir', default='.')
    synth.set_defaults(handler=cmd_synth)

    evaluate = commands.add_parser('eval', help='random-perturbation trials')
    evaluate.add_argument('--source', required=True)
    evaluate.add_argument('--target', required=True)
    evaluate.add_argument('--truth', required=True, help='truth.json from synth')
    evaluate.add_argument('--trials', type=int, default=10)
    evaluate.add_argument('--rot-range', type=float, default=45.0)
    evaluate.add_argument('--trans-range', type=float, default=15.0)
    evaluate.add_argument('--compare-plain', action='store_true', help='also run plain ICP on the same trials')
    evaluate.add_argument('--out-dir', default='.')
    add_pipeline_flags(evaluate)
    evaluate.set_defaults(handler=cmd_eval)

    inspect = commands.add_parser('inspect', help='summarize a cloud')
    inspect.add_argument('cloud')
    inspect.add_argument('--k', type=int, default=0, help='fit K complexity levels and report them')
    inspect.add_argument('--voxel', type=float, default=DEFAULT_VOXEL)
    inspect.add_argument('--radius', type=float, default=DEFAULT_RADIUS)
    inspect.add_argument('--seed', type=int, default=DEFAULT_SEED)
    inspect.set_defaults(handler=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_IO
    configure_logging(args.log_level, args.log_file)
    logging.info(f"forestalign {__version__}: {args.command}")

    try:
        return args.handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        say(f"❌ {e}")
        return EXIT_IO
    except ForestAlignError as e:
        code = exit_code_for(e)
        if e.stage:
            say(f"❌ {args.command} failed at stage '{e.stage}': {e}")
        else:
            say(f"❌ {args.command} failed: {e}")
        last = getattr(e, 'last_estimate', None)
        if isinstance(last, RigidTransform):
            say(f"   Last estimate: {np.array2string(last.to_euler6(), precision=4)}")
        logging.error(f"{args.command} failed: {e}")
        return code
    except OSError as e:
        say(f"❌ {args.command}: {e}")
        logging.error(f"{args.command} I/O error: {e}")
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
