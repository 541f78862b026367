"""HTTP streaming service: manifests, GOF byte ranges, server-side rendering."""

from .app import ServiceSettings, create_app

__all__ = ["ServiceSettings", "create_app"]
