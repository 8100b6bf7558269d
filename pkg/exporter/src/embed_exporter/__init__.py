"""embed-exporter: corpus file in, embedding interchange file out."""

__version__ = "0.1.0"

from .exporter import ExportJob, export

__all__ = ["ExportJob", "export"]
