from .config import AlgorithmSpec, ExperimentConfig, apply_settings, load_config, parse_config
from .experiment import run, sweep
from .validate import validate
