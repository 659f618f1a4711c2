"""
Shared helpers: error hierarchy, validators and file I/O
"""
