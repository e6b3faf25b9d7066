// Generated by tools/oracles/metrics_oracle.py; exact-fraction evaluation.
/// Rows: measure, topics 1..3, mean.
const METRIC_ORACLE: [(&str, [f64; 4]); 16] = [
    ("P@5", [0.2, 0.4, 0.2, 0.26666666666666666]),
    ("P@10", [0.1, 0.2, 0.1, 0.13333333333333333]),
    ("P@25", [0.08, 0.16, 0.04, 0.09333333333333332]),
    ("Rprec", [0.2, 0.4, 0.16666666666666666, 0.2555555555555556]),
    ("Bpref", [0.08, 0.36, 0.16666666666666666, 0.20222222222222222]),
    ("MRR", [0.2, 1.0, 0.25, 0.48333333333333334]),
    ("nDCG@5", [0.204239252433695, 0.5773584151532217, 0.14606834984270645, 0.3092220058098744]),
    ("nDCG@10", [0.1828573163147831, 0.5019798838924241, 0.15568103673200745, 0.2801727456464049]),
    ("P@5'", [0.2, 0.4, 0.2, 0.26666666666666666]),
    ("P@10'", [0.2, 0.4, 0.1, 0.23333333333333336]),
    ("P@25'", [0.08, 0.16, 0.04, 0.09333333333333332]),
    ("Rprec'", [0.2, 0.4, 0.16666666666666666, 0.2555555555555556]),
    ("Bpref'", [0.08, 0.36, 0.16666666666666666, 0.20222222222222222]),
    ("MRR'", [0.25, 1.0, 1.0, 0.75]),
    ("nDCG@5'", [0.2308584011611105, 0.6578242262397573, 0.4121943801949693, 0.4336256691986124]),
    ("nDCG@10'", [0.30248164345337347, 0.7256959112545757, 0.32155375665024644, 0.44991043711939854]),
];
