"""Command line pipeline: one subcommand per stage over a shared config.

Stages write their artifacts into a working directory (``--out``, or the
``SEGFORGE_DIR`` environment variable) and read the previous stage's files
from the same place. Every artifact embeds the effective config hash so a
stage can warn when its inputs were produced under different settings.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .clustering import ClusterSummary, search_threshold, summarize
from .config import ConfigInvalid, PipelineConfig, default_config_text, load_config
from .contentspace import (
    FeatureScaler,
    GameParams,
    classify_difficulty,
    enumerate_space,
    extract_features,
    generate_mazes,
    maze_from_record,
    maze_record_json,
)
from .engine import (
    CurriculumComplete,
    EmptyPool,
    PlayerProfile,
    practice_session,
    run_session,
)
from .errors import SegforgeError
from .gamestats import analyze_sessions, format_report, report_rows
from .knowledge import CompoundAnnotation, annotate_dataset
from .mapping import (
    ContentLibrary,
    GameRecord,
    deploy,
    export_json,
    export_level_curves,
    load_library,
    save_library,
    validate_library,
)

logger = logging.getLogger(__name__)

STAGES = ("annotate", "gen-space", "categorize", "cluster", "map", "simulate", "analyze")
LEVELS = ("easy", "medium", "hard")

GAME_COLUMNS = (
    "game_id",
    "maze_id",
    "enemy_type",
    "total_enemy",
    "total_bullets",
    "difficulty",
    "total_path",
    "total_corners",
    "total_intersections",
    "total_deadend",
    "complexity",
)


class MissingPrerequisite(SegforgeError):
    """A stage was invoked before the stage that produces its inputs."""


class WorkspaceLocked(SegforgeError):
    """Another pipeline run holds the working directory."""


# ===== Artifact plumbing =====


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _require(path: Path, producing_stage: str) -> None:
    if not path.is_file():
        raise MissingPrerequisite(
            f"{path.name} not found in {path.parent}; run the {producing_stage!r} stage first"
        )


def _check_hash(found: str | None, expected: str, path: Path) -> None:
    if found is not None and found != expected:
        logger.warning(
            "%s was produced under a different configuration (hash %s, current %s)",
            path.name,
            found[:12],
            expected[:12],
        )


def _csv_text(config_hash: str, header: tuple[str, ...], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_csv(path: Path, config_hash: str, producing_stage: str) -> list[dict[str, str]]:
    _require(path, producing_stage)
    found = None
    body: list[str] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            if "config_hash=" in line:
                found = line.split("config_hash=", 1)[1].strip()
            continue
        body.append(line)
    _check_hash(found, config_hash, path)
    return list(csv.DictReader(body))


def _jsonl_text(meta: dict, lines: list[str]) -> str:
    return "\n".join([json.dumps(meta, sort_keys=False)] + lines) + "\n"


def _read_jsonl(path: Path, config_hash: str, producing_stage: str) -> tuple[dict, list[dict]]:
    _require(path, producing_stage)
    records: list[dict] = []
    meta: dict = {}
    with path.open(encoding="utf-8") as handle:
        for index, line in enumerate(handle):
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if index == 0:
                meta = data
            else:
                records.append(data)
    _check_hash(meta.get("config_hash"), config_hash, path)
    return meta, records


class _WorkspaceLock:
    """One pipeline per working directory, guarded by a lock file."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".segforge.lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceLocked(
                f"{self.path} exists; another run may be active (remove the file if it is stale)"
            ) from None
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc_info):
        try:
            os.unlink(self.path)
        except OSError:
            pass
        return False


# ===== Stages =====


def run_annotate(config: PipelineConfig, out: Path) -> None:
    annotations = annotate_dataset(
        config.compounds_path or None, config.table_path or None
    )
    meta = {
        "artifact": "annotations",
        "config_hash": config.config_hash(),
        "count": len(annotations),
    }
    _atomic_write(
        out / "annotations.jsonl",
        _jsonl_text(meta, [a.to_json_line() for a in annotations]),
    )
    logger.info("annotated %d compounds", len(annotations))


def run_gen_space(config: PipelineConfig, out: Path) -> None:
    mazes = generate_mazes(
        config.maze_count, config.maze_width, config.maze_height, config.space_seed
    )
    features = {m.maze_id: extract_features(m) for m in mazes}
    games = enumerate_space(mazes)
    config_hash = config.config_hash()

    meta = {
        "artifact": "mazes",
        "config_hash": config_hash,
        "count": len(mazes),
        "width": config.maze_width,
        "height": config.maze_height,
    }
    _atomic_write(
        out / "mazes.jsonl",
        _jsonl_text(meta, [maze_record_json(m, features[m.maze_id]) for m in mazes]),
    )

    header = tuple(c for c in GAME_COLUMNS if c != "difficulty")
    rows = []
    for game in games:
        f = features[game.maze_id]
        rows.append(
            [
                game.game_id,
                game.maze_id,
                game.enemy_type,
                game.total_enemy,
                game.total_bullets,
                f.total_path,
                f.total_corners,
                f.total_intersections,
                f.total_deadend,
                repr(f.complexity),
            ]
        )
    _atomic_write(out / "space.csv", _csv_text(config_hash, header, rows))
    logger.info("generated %d mazes and %d game variants", len(mazes), len(games))


def run_categorize(config: PipelineConfig, out: Path) -> None:
    config_hash = config.config_hash()
    rows = _read_csv(out / "space.csv", config_hash, "gen-space")
    out_rows = []
    for row in rows:
        params = GameParams(
            game_id=row["game_id"],
            maze_id=row["maze_id"],
            enemy_type=int(row["enemy_type"]),
            total_enemy=int(row["total_enemy"]),
            total_bullets=int(row["total_bullets"]),
        )
        difficulty = classify_difficulty(params).value
        out_rows.append(
            [
                row["game_id"],
                row["maze_id"],
                row["enemy_type"],
                row["total_enemy"],
                row["total_bullets"],
                difficulty,
                row["total_path"],
                row["total_corners"],
                row["total_intersections"],
                row["total_deadend"],
                row["complexity"],
            ]
        )
    _atomic_write(out / "games.csv", _csv_text(config_hash, GAME_COLUMNS, out_rows))
    logger.info("categorized %d games", len(out_rows))


def _vector_from_row(row: dict[str, str]) -> tuple[float, ...]:
    return (
        float(row["enemy_type"]),
        float(row["total_enemy"]),
        float(row["total_bullets"]),
        float(row["total_path"]),
        float(row["total_corners"]),
        float(row["total_intersections"]),
        float(row["total_deadend"]),
        float(row["complexity"]),
    )


def run_cluster(config: PipelineConfig, out: Path) -> None:
    config_hash = config.config_hash()
    rows = _read_csv(out / "games.csv", config_hash, "categorize")
    raw = {row["game_id"]: _vector_from_row(row) for row in rows}
    # one scaler over the whole space keeps the three levels comparable
    scaler = FeatureScaler.fit(list(raw.values()))

    cluster_rows = []
    member_rows = []
    log_rows = []
    for level in LEVELS:
        tags = sorted(row["game_id"] for row in rows if row["difficulty"] == level)
        points = scaler.transform([raw[tag] for tag in tags])
        result = search_threshold(
            points,
            tags,
            grid=config.cluster_threshold_grid,
            k=config.cluster_k,
            branching=config.cluster_branching,
            sample_cap=config.cluster_sample_cap,
            seed=config.cluster_seed,
        )
        for candidate in result.log:
            log_rows.append(
                [
                    level,
                    repr(candidate.threshold),
                    candidate.leaf_count,
                    "" if candidate.silhouette is None else repr(candidate.silhouette),
                    "true" if candidate.threshold == result.best_threshold else "false",
                ]
            )
        for index, cluster in enumerate(result.clusters):
            summary = summarize(cluster, raw, level, f"{level}-{index:03d}")
            cluster_rows.append(
                [summary.cluster_id, level, summary.n, repr(summary.s)]
                + [repr(c) for c in summary.centroid]
            )
            member_rows.extend(
                [summary.cluster_id, game_id] for game_id in sorted(summary.member_game_ids)
            )
        logger.info(
            "level %s: threshold %g scored %.4f over %d clusters",
            level,
            result.best_threshold,
            result.score,
            len(result.clusters),
        )

    cluster_header = ("cluster_id", "difficulty", "n", "s") + tuple(
        f"c{i}" for i in range(8)
    )
    _atomic_write(out / "clusters.csv", _csv_text(config_hash, cluster_header, cluster_rows))
    _atomic_write(
        out / "membership.csv",
        _csv_text(config_hash, ("cluster_id", "game_id"), member_rows),
    )
    _atomic_write(
        out / "threshold_log.csv",
        _csv_text(
            config_hash,
            ("difficulty", "threshold", "leaf_count", "silhouette", "selected"),
            log_rows,
        ),
    )


def _load_annotations(out: Path, config_hash: str) -> list[CompoundAnnotation]:
    _, records = _read_jsonl(out / "annotations.jsonl", config_hash, "annotate")
    return [CompoundAnnotation(**record) for record in records]


def _load_games(out: Path, config_hash: str) -> list[GameRecord]:
    rows = _read_csv(out / "games.csv", config_hash, "categorize")
    return [
        GameRecord(
            game_id=row["game_id"],
            maze_id=row["maze_id"],
            enemy_type=int(row["enemy_type"]),
            total_enemy=int(row["total_enemy"]),
            total_bullets=int(row["total_bullets"]),
            difficulty=row["difficulty"],
            total_path=int(row["total_path"]),
            total_corners=int(row["total_corners"]),
            total_intersections=int(row["total_intersections"]),
            total_deadend=int(row["total_deadend"]),
            complexity=float(row["complexity"]),
        )
        for row in rows
    ]


def _load_summaries(out: Path, config_hash: str) -> list[ClusterSummary]:
    members: dict[str, list[str]] = {}
    for row in _read_csv(out / "membership.csv", config_hash, "cluster"):
        members.setdefault(row["cluster_id"], []).append(row["game_id"])
    summaries = []
    for row in _read_csv(out / "clusters.csv", config_hash, "cluster"):
        summaries.append(
            ClusterSummary(
                cluster_id=row["cluster_id"],
                difficulty=row["difficulty"],
                n=int(row["n"]),
                s=float(row["s"]),
                centroid=tuple(float(row[f"c{i}"]) for i in range(8)),
                member_game_ids=tuple(sorted(members.get(row["cluster_id"], ()))),
            )
        )
    return summaries


def run_map(config: PipelineConfig, out: Path, export_plots: bool = False) -> None:
    config_hash = config.config_hash()
    compounds = _load_annotations(out, config_hash)
    games = _load_games(out, config_hash)
    summaries = _load_summaries(out, config_hash)
    by_level = {
        level: [s for s in summaries if s.difficulty == level] for level in LEVELS
    }
    mapping = deploy(compounds, by_level)
    library = ContentLibrary(
        compounds=compounds,
        games=games,
        clusters=summaries,
        mapping=mapping,
        metadata={"config_hash": config_hash, "tool_version": __version__},
    )
    validate_library(library)
    save_library(library, str(out / "library.sqlite"))
    _atomic_write(out / "library.json", export_json(library))
    if export_plots:
        n_csv, s_csv = export_level_curves(library)
        prefix = f"# config_hash={config_hash}\n"
        _atomic_write(out / "mapping_N.csv", prefix + n_csv)
        _atomic_write(out / "mapping_S.csv", prefix + s_csv)
    logger.info(
        "deployed %d compounds x %d levels over %d clusters",
        len(compounds),
        len(LEVELS),
        len(summaries),
    )


def run_simulate(config: PipelineConfig, out: Path, recycle: bool = False) -> None:
    config_hash = config.config_hash()
    _require(out / "library.sqlite", "map")
    library = load_library(str(out / "library.sqlite"), expected_config_hash=config_hash)
    _, maze_records = _read_jsonl(out / "mazes.jsonl", config_hash, "gen-space")
    mazes = {}
    for record in maze_records:
        grid, _ = maze_from_record(record)
        mazes[grid.maze_id] = grid

    recycle = recycle or config.sim_recycle
    session_lines: list[str] = []
    event_lines: list[str] = []

    def log_events(player_id: str, game_id: str, events) -> None:
        for event in events:
            event_lines.append(
                json.dumps(
                    {
                        "player_id": player_id,
                        "game_id": game_id,
                        "tick": event.tick,
                        "kind": event.kind,
                        "detail": event.detail,
                    },
                    sort_keys=False,
                )
            )

    victories = 0
    for p in range(config.sim_players):
        profile = PlayerProfile(f"player-{p:03d}")
        practice = practice_session(
            profile,
            config.sim_policy,
            seed=config.sim_seed + p,
            easy_medium=config.easy_medium,
            medium_hard=config.medium_hard,
            positive_weights=config.positive_weights,
            negative_weights=config.negative_weights,
        )
        log_events(profile.player_id, practice.game_id, practice.events)
        for s in range(config.sim_sessions):
            seed = config.sim_seed + 1009 + p * config.sim_sessions + s
            try:
                record = run_session(
                    profile,
                    library,
                    mazes,
                    config.sim_policy,
                    seed,
                    recycle=recycle,
                    positive_weights=config.positive_weights,
                    negative_weights=config.negative_weights,
                )
            except CurriculumComplete:
                event_lines.append(
                    json.dumps(
                        {"player_id": profile.player_id, "kind": "curriculum_complete"}
                    )
                )
                break
            except EmptyPool:
                event_lines.append(
                    json.dumps(
                        {"player_id": profile.player_id, "kind": "pool_exhausted"}
                    )
                )
                break
            session_lines.append(json.dumps(record.to_record(), sort_keys=False))
            log_events(profile.player_id, record.game_id, record.events)
            victories += record.outcome == "victory"

    base_meta = {
        "config_hash": config_hash,
        "players": config.sim_players,
        "sessions_per_player": config.sim_sessions,
        "policy": config.sim_policy,
    }
    _atomic_write(
        out / "sessions.jsonl",
        _jsonl_text({"artifact": "sessions", **base_meta}, session_lines),
    )
    _atomic_write(
        out / "events.jsonl",
        _jsonl_text({"artifact": "events", **base_meta}, event_lines),
    )
    logger.info(
        "simulated %d sessions (%d victories) for %d players",
        len(session_lines),
        victories,
        config.sim_players,
    )


def run_analyze(config: PipelineConfig, out: Path, sessions_path: str | None = None) -> None:
    config_hash = config.config_hash()
    path = Path(sessions_path) if sessions_path else out / "sessions.jsonl"
    _, records = _read_jsonl(path, config_hash, "simulate")
    analysis = analyze_sessions(
        records,
        ci_level=config.stats_ci_level,
        significance=config.stats_significance,
        min_n=config.stats_min_n,
    )
    _atomic_write(out / "report.txt", format_report(analysis))
    rows = [[name, value] for name, value in report_rows(analysis)]
    _atomic_write(
        out / "report_numbers.csv",
        _csv_text(config_hash, ("metric", "value"), rows),
    )
    logger.info(
        "analyzed %d sessions (%d learning-eligible)",
        analysis.total_sessions,
        analysis.eligible_sessions,
    )


# ===== Entry point =====


def _run_stage(stage: str, config: PipelineConfig, out: Path, args: argparse.Namespace) -> None:
    if stage == "annotate":
        run_annotate(config, out)
    elif stage == "gen-space":
        run_gen_space(config, out)
    elif stage == "categorize":
        run_categorize(config, out)
    elif stage == "cluster":
        run_cluster(config, out)
    elif stage == "map":
        run_map(config, out, export_plots=args.export_plots)
    elif stage == "simulate":
        run_simulate(config, out, recycle=args.recycle)
    elif stage == "analyze":
        run_analyze(config, out, sessions_path=getattr(args, "sessions", None))
    else:
        raise ConfigInvalid(f"unknown stage {stage!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segforge",
        description="Generate, cluster, map and exercise maze-game learning content.",
    )
    parser.add_argument("--version", action="version", version=f"segforge {__version__}")
    subparsers = parser.add_subparsers(dest="stage", required=True, metavar="stage")
    for name in STAGES + ("pipeline",):
        sub = subparsers.add_parser(name, help=f"run the {name} stage")
        sub.add_argument("--config", default=None, help="path to a key=value config file")
        sub.add_argument(
            "--out",
            default=None,
            help="working directory for artifacts (default: $SEGFORGE_DIR or ./segforge_out)",
        )
        sub.add_argument(
            "--seed", type=int, default=None, help="override space, cluster and sim seeds"
        )
        sub.add_argument(
            "--recycle",
            action="store_true",
            help="reopen exhausted game clusters during simulation",
        )
        sub.add_argument(
            "--export-plots",
            action="store_true",
            dest="export_plots",
            help="also write per-level N and S curve CSVs during map",
        )
        if name == "analyze":
            sub.add_argument(
                "--sessions", default=None, help="session summaries to analyze"
            )
    init = subparsers.add_parser("init-config", help="print a commented default config")
    init.add_argument("--config", default=None, help="write the template to this path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.stage == "init-config":
        text = default_config_text()
        if args.config:
            _atomic_write(Path(args.config), text)
        else:
            sys.stdout.write(text)
        return 0

    try:
        overrides: dict[str, str] = {}
        if args.seed is not None:
            overrides = {
                "space.seed": str(args.seed),
                "cluster.seed": str(args.seed),
                "sim.seed": str(args.seed),
            }
        config = load_config(args.config, overrides)
        out = Path(args.out or os.environ.get("SEGFORGE_DIR") or "segforge_out")
        out.mkdir(parents=True, exist_ok=True)
        stages = STAGES if args.stage == "pipeline" else (args.stage,)
        with _WorkspaceLock(out):
            for stage in stages:
                _run_stage(stage, config, out, args)
    except SegforgeError as exc:
        print(f"segforge {args.stage}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
