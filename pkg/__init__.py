"""
Copula Boost
Boosted distributional copula regression for bivariate binary, count and mixed responses.
"""
