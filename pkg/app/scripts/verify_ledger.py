#!/usr/bin/env python3
"""
Cost Ledger Verification Utility

This script verifies the hash chain of a run's cost ledger. It detects edited,
removed or reordered entries, which would invalidate every speedup and budget
figure read back from the ledger.

Usage:
    python -m app.scripts.verify_ledger [options]

Options:
    --ledger PATH      Path to a ledger.jsonl file
    --run-dir PATH     Run output directory containing ledger.jsonl
    --totals           Also print evaluation counts per kind/purpose
    --verbose, -v      Enable verbose output
    --json             Output results in JSON format
    --help, -h         Show this help message and exit
"""

import os
import sys
import json
import argparse
from pathlib import Path
from typing import Any, Dict

# Add the parent directory to the path to import app modules
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from app.core.config import settings
from app.core.ledger import CostLedger
from app.core.logging import logger, set_verbose

def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description='Verify the integrity of a cost ledger')

    parser.add_argument('--ledger', type=str, help='Path to a ledger.jsonl file')
    parser.add_argument('--run-dir', type=str, help='Run output directory containing ledger.jsonl')
    parser.add_argument('--totals', action='store_true', help='Print evaluation counts per kind/purpose')
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose output')
    parser.add_argument('--json', action='store_true', help='Output results in JSON format')

    return parser.parse_args(argv)

def resolve_ledger_path(args) -> Path:
    if args.ledger:
        return Path(args.ledger)
    run_dir = Path(args.run_dir or os.environ.get("TAILSIFT_RUN_DIR", settings.OUTPUT_DIR))
    return run_dir / "ledger.jsonl"

def verify_ledger_file(path: Path, verbose: bool = False) -> Dict[str, Any]:
    """Verify a single ledger file."""
    logger.info(f"Verifying ledger: {path}")
    ledger = CostLedger(path)
    result = ledger.verify()
    result["totals"] = ledger.totals()

    if verbose and not result["valid"]:
        print(f"\nInvalid entries in {path.name}:")
        for entry in result["invalid_entries"]:
            print(f"  Line {entry.get('line')} (seq {entry.get('seq')})")

    return result

def main(argv=None) -> int:
    """Main function."""
    args = parse_arguments(argv)
    set_verbose(args.verbose)

    path = resolve_ledger_path(args)
    if not path.exists():
        logger.error(f"Ledger file does not exist: {path}")
        return 1

    try:
        result = verify_ledger_file(path, args.verbose)
    except (OSError, ValueError, KeyError) as e:
        logger.error(f"Error reading ledger {path}: {str(e)}")
        return 1

    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print("\nCost Ledger Verification Summary:")
        print(f"Ledger: {path}")
        print(f"Total entries: {result['total_entries']}")
        print(f"Verified entries: {result['verified_entries']}")
        print(f"Chain valid: {'yes' if result['valid'] else 'NO'}")
        if args.totals:
            print("\nEvaluation counts:")
            for key, count in result["totals"].items():
                print(f"  {key:<18} {count}")

    return 0 if result["valid"] else 1

if __name__ == "__main__":
    sys.exit(main())
