"""
Extensions
----------

Modules integrating textmap with the toolsets that need it.

"""
