"""
Main entry point for Spherical LRD Regression
"""

import logging
import logging.config
import sys
from typing import Optional, Sequence

import click

from config import Config
from controllers.commands import COMMANDS
from models.errors import (
    BoundsError,
    ConfigurationError,
    DataFormatError,
    DimensionMismatchError,
    ExperimentError,
    IndexRangeError,
    NotComputedError,
    NumericalError,
)

VERSION = "1.0.0"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

logger = logging.getLogger("sphlrd")


# Configure logging
def setup_logging():
    """Setup application logging"""
    Config.LOG_DIR.mkdir(parents=True, exist_ok=True)
    logging.config.dictConfig(Config.LOGGING_CONFIG)


def create_cli() -> click.Group:
    """Create the command group and register every command"""

    @click.group(name="sphlrd", context_settings={"help_option_names": ["-h", "--help"]})
    @click.version_option(VERSION, prog_name="sphlrd")
    def cli():
        """Spherical functional regression under long-range dependent errors"""

    for command in COMMANDS:
        cli.add_command(command)
    return cli


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and translate failures into exit codes"""
    setup_logging()
    cli = create_cli()
    args = list(sys.argv[1:] if argv is None else argv)
    logger.debug("Invoked with %s", args)

    try:
        result = cli.main(args=args, prog_name="sphlrd", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted", err=True)
        return EXIT_USAGE
    except (ConfigurationError, DimensionMismatchError, BoundsError, IndexRangeError, NotComputedError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc, exc_info=Config.DEBUG)
        return EXIT_USAGE
    except (NumericalError, ExperimentError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc, exc_info=Config.DEBUG)
        return EXIT_NUMERICAL
    except (DataFormatError, OSError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc, exc_info=Config.DEBUG)
        return EXIT_IO

    # --help and --version come back as the exit code
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
