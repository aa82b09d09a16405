from crashsurrogate.api.pipeline import list_model_families, generate, split_dataset, train_family, rollout_samples, \
    evaluate_samples, report_plots, bench, contact_dump, select, load_predictor
