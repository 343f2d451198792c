from .base import InventoryApp
from .multiechelon import MultiEchelonApp, inverse_transform, transform, transformed_set
from .multiproduct import MultiProductApp
from .owms import DeliveryOutcome, OwmsApp

__all__ = [
    "InventoryApp",
    "MultiProductApp",
    "MultiEchelonApp",
    "OwmsApp",
    "DeliveryOutcome",
    "transform",
    "inverse_transform",
    "transformed_set",
]
