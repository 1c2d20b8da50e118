#!/usr/bin/env python3
"""
Script to run a verification / security experiment
"""

import sys
from pathlib import Path


def main():
    """Run one experiment through the bellhash CLI"""

    # Add project root to Python path
    project_root = Path(__file__).parent.parent
    sys.path.insert(0, str(project_root))

    from src.harness.cli import main as cli_main

    if len(sys.argv) < 2:
        print("Usage: run_experiment.py <verify-sim|game-sim|repeater-sim|attack-analysis|"
              "estimate|oracle-check|bounds|run> [options]")
        print(f"Example configs live in {project_root / 'configs'}")
        sys.exit(1)

    try:
        sys.exit(cli_main(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\nExperiment stopped by user")
        sys.exit(2)


if __name__ == "__main__":
    main()
