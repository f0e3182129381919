"""
Bipedal walking simulation: the trunk spring-loaded template, its stride
analysis and controllers, and the 5-link robot with leg-force control.
"""
