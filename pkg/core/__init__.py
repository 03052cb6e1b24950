"""
Módulos principales del motor Feynman-Kac y del oráculo espectral
"""
