"""
ambictrl test package.
"""
