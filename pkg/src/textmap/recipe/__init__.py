"""
Recipes
-------

Stand-alone workflows composed of textmap primitives.

"""
