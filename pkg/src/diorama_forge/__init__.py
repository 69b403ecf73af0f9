"""diorama-forge: photos of one event in, a dynamic 3D diorama manifest out."""

__version__ = "0.1.0"
