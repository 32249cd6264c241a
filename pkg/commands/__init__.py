"""
This package contains the command-line subcommands, one module per command.
"""
