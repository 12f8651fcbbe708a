"""Reference HTTP denoiser backend speaking the tileshift wire protocol."""

from .app import create_app
from .model import AnalyticModel, SpaceToDepthCodec, load_model

__version__ = "0.1.0"
