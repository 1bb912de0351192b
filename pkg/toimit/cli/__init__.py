# toimit/cli - command-line surface
from toimit.cli.commands import COMMANDS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_SOLVER, run_command

__all__ = ["COMMANDS", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_OK", "EXIT_SOLVER", "run_command"]
