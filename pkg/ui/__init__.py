"""
Interfaz de línea de comandos y configuración de experimentos
"""
