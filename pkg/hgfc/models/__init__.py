"""
Pydantic models package
"""
from hgfc.models.schemas import ErrorResponse, ExperimentConfig, InstanceFile, StandardResponse

__all__ = ["StandardResponse", "ErrorResponse", "ExperimentConfig", "InstanceFile"]
