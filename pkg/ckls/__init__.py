# CKLS App
# CKLS -> CIR -> OU pipeline, Girsanov weights, Feller checks
