#!/usr/bin/env python3
"""
dialpath - Main Entry Point

Reasoning-path learning over compositional semantic graphs of dialogue:
synthetic corpora, semantic graphs, oracle paths, path generator and
answer-propagation training, decoding, evaluation and inspection.

Usage:
    python main.py [global options] <command> [command options]

Global options may also follow the command.

Commands:
    gen-corpus      Generate a synthetic corpus with planted reasoning paths
    build-graph     Build the semantic graph of one (dialogue, turn)
    oracle-paths    Compute ground-truth reasoning paths for a corpus
    train-paths     Train the path generator
    train-joint     Train path generator and answer propagation model
    decode-path     Decode a reasoning path with a trained model
    evaluate        Score a path strategy (and answers) on a corpus
    inspect         Show spans, edges and scored candidates for one turn

Global options:
    -c, --config <file>         Flat key = value configuration file
    -v, --verbose               Enable verbose logging
    --no-color                  Disable colored output
    --seed <n>                  Override the seed (beats DIALPATH_SEED)
    --embeddings <file>         Word-vector file (default: hashed vectors)
    --tau <x>                   Span similarity threshold
    --lexicon-dir <dir>         Span lexicon directory
"""

import argparse
import sys
import os
from typing import Optional

# Add project root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from utils.logger import Logger
from utils.output_writer import OutputWriter
from config.config_manager import ConfigManager
from harness.runner import PipelineRunner

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130


class DialPathApp:
    """Main application class for the dialpath command line."""

    def __init__(self, argv: Optional[list] = None):
        """Initialize the application."""
        self.argv = argv
        self.args = None
        self.logger = None
        self.config_manager = None
        self.runner = None

        # Application state
        self.verbose = False
        self.use_colors = True
        self.usage_exit = EXIT_USAGE

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="dialpath",
            description="dialpath - reasoning paths over compositional semantic graphs of dialogue",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
    dialpath gen-corpus --seed 7 --n 500 -o corpus/
    dialpath build-graph --dialogue living_room --turn 5 --format json
    dialpath train-paths --train corpus/train.jsonl --val corpus/val.jsonl -o model.dpc
    dialpath evaluate --corpus corpus/val.jsonl --strategy last_1
    dialpath evaluate --corpus corpus/val.jsonl --strategy learned --model model.dpc --beam 5
            """
        )

        self._add_global_arguments(parser, top_level=True)
        # Global options are also accepted after the subcommand.
        common = argparse.ArgumentParser(add_help=False)
        self._add_global_arguments(common, top_level=False)

        commands = parser.add_subparsers(dest="command", metavar="<command>")
        commands.required = True

        gen = commands.add_parser("gen-corpus", parents=[common], help="Generate a synthetic corpus")
        gen.add_argument("-o", "--output", required=True, help="Output directory")
        gen.add_argument("--n", type=int, help="Number of training dialogues")
        gen.add_argument("--val", type=int, help="Number of validation dialogues (default: n // 5)")

        graph = commands.add_parser("build-graph", parents=[common],
                                    help="Build the semantic graph of one turn")
        self._add_turn_arguments(graph)
        graph.add_argument("--format", choices=["json", "dot"], default="json", help="Output format")
        graph.add_argument("-o", "--output", help="Output file (default: stdout)")

        oracle = commands.add_parser("oracle-paths", parents=[common], help="Compute ground-truth paths")
        oracle.add_argument("--corpus", help="Corpus JSONL (default: bundled fixture)")
        oracle.add_argument("-o", "--output", help="Output JSONL (default: stdout)")

        train = commands.add_parser("train-paths", parents=[common], help="Train the path generator")
        self._add_training_arguments(train)

        joint = commands.add_parser("train-joint", parents=[common],
                                    help="Train path generator and propagation model")
        self._add_training_arguments(joint)
        joint.add_argument("--grids", help="Visual grid container (default: grids.dpc next to --train)")
        joint.add_argument("--regime", choices=["joint", "pipeline"], help="Training regime")
        joint.add_argument("--no-graph-propagation", action="store_true", help="Disable the GCN update")
        joint.add_argument("--no-path-propagation", action="store_true", help="Disable the path stream")

        decode = commands.add_parser("decode-path", parents=[common], help="Decode a reasoning path")
        decode.add_argument("--model", required=True, help="Checkpoint file")
        self._add_turn_arguments(decode)
        decode.add_argument("--beam", type=int, default=1, help="Beam size (1: greedy)")
        decode.add_argument("-o", "--output", help="Output file (default: stdout)")

        evaluate = commands.add_parser("evaluate", parents=[common], help="Score a path strategy")
        evaluate.add_argument("--corpus", required=True, help="Corpus JSONL")
        evaluate.add_argument("--strategy", default="learned",
                              help="learned, oracle, random, last_n or last_<n>")
        evaluate.add_argument("--n", type=int, help="Window for last_n (1..10)")
        evaluate.add_argument("--beam", type=int, default=1, help="Beam size for learned paths (1: greedy)")
        evaluate.add_argument("--model", help="Checkpoint file (required for learned paths and answers)")
        evaluate.add_argument("--grids", help="Visual grid container (default: grids.dpc next to --corpus)")
        evaluate.add_argument("--gold", help="Planted gold paths (default: gold_paths.jsonl next to --corpus)")
        evaluate.add_argument("--predictions", help="Also write per-example predictions as JSONL")
        evaluate.add_argument("-o", "--output", help="Report file (default: stdout)")

        inspect = commands.add_parser("inspect", parents=[common], help="Inspect one turn or sweep tau")
        self._add_turn_arguments(inspect)
        inspect.add_argument("--model", help="Checkpoint file; adds the generated path")
        inspect.add_argument("--tau-sweep", action="store_true",
                             help="Report edge density and oracle recovery for several thresholds")
        inspect.add_argument("--gold", help="Planted gold paths for --tau-sweep")
        inspect.add_argument("-o", "--output", help="Output file (default: stdout)")
        return parser

    @staticmethod
    def _add_global_arguments(parser: argparse.ArgumentParser, top_level: bool):
        """
        Add the options shared by every command.

        Subcommand copies default to SUPPRESS so that a value given before
        the subcommand is not reset when the option is absent after it.
        """
        unset = None if top_level else argparse.SUPPRESS
        flag_unset = False if top_level else argparse.SUPPRESS
        parser.add_argument("-c", "--config", default=unset,
                            help="Configuration file (flat key = value)")
        parser.add_argument("-v", "--verbose", action="store_true", default=flag_unset,
                            help="Enable verbose logging")
        parser.add_argument("--no-color", action="store_true", default=flag_unset,
                            help="Disable colored output")
        parser.add_argument("--seed", type=int, default=unset,
                            help="Random seed (overrides config and DIALPATH_SEED)")
        parser.add_argument("--embeddings", default=unset,
                            help="Text word-vector file (default: hashed vectors)")
        parser.add_argument("--tau", type=float, default=unset,
                            help="Span similarity threshold")
        parser.add_argument("--lexicon-dir", default=unset,
                            help="Directory of span lexicon files")
        parser.add_argument("--semantics", choices=["compositional", "global", "fully_connected"],
                            default=unset, help="Graph semantics")
        parser.add_argument("--direction", choices=["BiDirect", "TODirect"], default=unset,
                            help="Edge direction mode")
        parser.add_argument("--oracle-mode", choices=["auto", "coverage", "global_similarity"],
                            default=unset, help="Ground-truth path oracle")
        parser.add_argument("--turns", choices=["final", "all"], default=unset,
                            help="Build examples for the final turn or every turn")

    @staticmethod
    def _add_turn_arguments(parser: argparse.ArgumentParser):
        parser.add_argument("--corpus", help="Corpus JSONL (default: bundled fixture)")
        parser.add_argument("--dialogue", help="Dialogue id (default: first dialogue)")
        parser.add_argument("--turn", type=int, help="Turn index (default: last turn)")

    @staticmethod
    def _add_training_arguments(parser: argparse.ArgumentParser):
        parser.add_argument("--train", required=True, help="Training corpus JSONL")
        parser.add_argument("--val", help="Validation corpus JSONL")
        parser.add_argument("-o", "--output", required=True, help="Checkpoint file to write")
        parser.add_argument("--epochs", type=int, help="Maximum number of epochs")

    def parse_arguments(self) -> bool:
        """
        Parse command line arguments.

        Returns:
            True if arguments parsed successfully, False if should exit
        """
        parser = self.build_parser()
        try:
            self.args = parser.parse_args(self.argv)
            self.verbose = self.args.verbose
            self.use_colors = not self.args.no_color
            return True
        except SystemExit as e:
            # --help exits with 0, usage errors with 2
            self.usage_exit = e.code if isinstance(e.code, int) else EXIT_USAGE
            return False

    def initialize_components(self) -> bool:
        """
        Initialize all application components.

        Returns:
            True if initialization successful, False otherwise
        """
        try:
            # Initialize logger
            self.logger = Logger(verbose=self.verbose, use_colors=self.use_colors)
            self.logger.log_section(f"dialpath {self.args.command}")

            # Load configuration
            self.config_manager = ConfigManager(self.logger)
            if not self.config_manager.load_config(self.args.config):
                return False

            # Override config values with command line arguments
            self._override_config_with_args()
            self.logger.log_config(self.config_manager.values())

            self.runner = PipelineRunner(self.logger, self.config_manager, OutputWriter(self.logger))
            return True

        except Exception as e:
            if self.logger:
                self.logger.log_error(f"Failed to initialize components: {e}")
            else:
                print(f"Error: Failed to initialize components: {e}", file=sys.stderr)
            return False

    def _override_config_with_args(self):
        """Override configuration values with command line arguments."""
        args = self.args
        overrides = {
            'seed': args.seed,
            'embeddings': args.embeddings,
            'tau': args.tau,
            'lexicon_dir': args.lexicon_dir,
            'semantics': args.semantics,
            'direction': args.direction,
            'oracle_mode': args.oracle_mode,
            'turns': args.turns,
            'n_dialogues': getattr(args, 'n', None) if args.command == 'gen-corpus' else None,
            'val_dialogues': getattr(args, 'val', None) if args.command == 'gen-corpus' else None,
            'epochs': getattr(args, 'epochs', None),
            'regime': getattr(args, 'regime', None),
        }
        for key, value in overrides.items():
            if value is not None:
                self.config_manager.set(key, value)
        if getattr(args, 'no_graph_propagation', False):
            self.config_manager.set('graph_propagation', False)
        if getattr(args, 'no_path_propagation', False):
            self.config_manager.set('path_propagation', False)

    def run_command(self) -> bool:
        """
        Dispatch the selected subcommand to the pipeline runner.

        Returns:
            True if the command succeeded, False otherwise
        """
        args = self.args
        runner = self.runner
        if args.command == "gen-corpus":
            return runner.gen_corpus(args.output)
        if args.command == "build-graph":
            return runner.build_graph(args.corpus, args.dialogue, args.turn, args.format, args.output)
        if args.command == "oracle-paths":
            return runner.oracle_paths(args.corpus, args.output)
        if args.command == "train-paths":
            return runner.train_paths(args.train, args.val, args.output)
        if args.command == "train-joint":
            return runner.train_joint(args.train, args.val, args.grids, args.output)
        if args.command == "decode-path":
            return runner.decode_path(args.model, args.corpus, args.dialogue, args.turn, args.beam, args.output)
        if args.command == "evaluate":
            return runner.evaluate(args.corpus, args.strategy, args.n, args.beam, args.model, args.grids,
                                   args.gold, args.output, args.predictions)
        if args.command == "inspect":
            if args.tau_sweep:
                return runner.tau_sweep(args.corpus, args.gold, args.output)
            return runner.inspect(args.corpus, args.dialogue, args.turn, args.model, args.output)
        self.logger.log_error(f"Unknown command: {args.command}")
        return False

    def run(self) -> int:
        """
        Main application entry point.

        Returns:
            Exit code (0 success, 1 failure, 2 usage error, 130 interrupted)
        """
        try:
            # Parse command line arguments
            if not self.parse_arguments():
                return self.usage_exit

            # Initialize components
            if not self.initialize_components():
                return EXIT_FAILURE

            if not self.run_command():
                return EXIT_FAILURE

            self.logger.log_success(f"{self.args.command} completed successfully")
            return EXIT_OK

        except KeyboardInterrupt:
            if self.logger:
                self.logger.log_warning("Interrupted by user")
            else:
                print("\nInterrupted by user", file=sys.stderr)
            return EXIT_INTERRUPTED
        except Exception as e:
            if self.logger:
                self.logger.log_error(f"Unexpected error: {e}")
            else:
                print(f"Error: {e}", file=sys.stderr)
            return EXIT_FAILURE
        finally:
            if self.logger:
                self.logger.close_progress_bar()


def main():
    """Entry point for the application."""
    app = DialPathApp()
    exit_code = app.run()
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
