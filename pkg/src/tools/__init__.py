"""Domain tools: windows, fusion, boundaries, consistency, losses"""
