# CKLS Lab Project
# Short-rate transformation, measure change and boundary checks
