"""Claim-driven keyword learning and candidate flagging for soft moderation.

The package turns seed posts into check-worthy claims, learns the best
keyword query per claim with a bagged LambdaMART ranker over
retrieval-driven features, and flags every matching corpus post for human
moderator review.
"""

__version__ = "0.1.0"
