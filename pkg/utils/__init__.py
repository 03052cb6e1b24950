"""
Utilidades: validación, tiempos, paralelismo y serialización
"""
