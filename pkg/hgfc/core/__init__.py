"""
Scheduling core: costs, instances, flow oracle, algorithms and verification
"""
