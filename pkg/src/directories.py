import os
import logging
# Setup basic logging
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)

# Run directories live under the caller's working directory
RUNS_DIR = os.path.join(os.getcwd(), 'runs')

# Leaf file names inside a run directory
CONFIG_FILE = 'config.json' # RunConfig, round-trippable
CHAIN_FILE = 'chains.csv' # JSON header line followed by the draws as CSV
ENCODING_FILE = 'encoding.json' # Encoding maps and scaling pairs of the training design
BALANCE_FILE = 'balance.json' # BalanceReport of the training table
SUMMARY_TXT = 'summary.txt'
SUMMARY_JSON = 'summary.json'
HOLDOUT_FILE = 'holdout.csv' # Held-out raw records in the input schema
PREDICTIONS_TXT = 'predictions.txt' # Posterior-predictive table of the held-out records
PREDICTIONS_JSON = 'predictions.json'
RUN_LOG = 'run.log' # Only artifact allowed to carry timestamps


def default_run_dir(link: str, seed: int) -> str:
    """
    Default run directory for a fit.

    Args:
        link (str): Link name, 'logit' or 'probit'.
        seed (int): Master seed of the run.

    Returns:
        str: Path of the run directory under RUNS_DIR.
    """
    return os.path.join(RUNS_DIR, f"{link}-seed{seed}")


def run_file(run_dir: str, name: str) -> str:
    """Path of a leaf file inside a run directory."""
    return os.path.join(run_dir, name)


# Function to create directories safely
def create_directory(path):
    try:
        os.makedirs(path, exist_ok=True)
        logging.info(f"Directory created or verified: {path}")
    except OSError as e:
        logging.error(f"Failed to create directory {path}: {e}")
        raise


def attach_run_log(run_dir: str) -> logging.Handler:
    """
    Adds a file handler writing the sidecar run log of a fit.

    Args:
        run_dir (str): Run directory; must exist.

    Returns:
        logging.Handler: The handler, so the caller can detach it when the run ends.
    """
    handler = logging.FileHandler(run_file(run_dir, RUN_LOG), mode='w')
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    """Removes and closes a handler added by attach_run_log."""
    logging.getLogger().removeHandler(handler)
    handler.close()
