# Sufficient exponential tilting for portfolio credit risk
