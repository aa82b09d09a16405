import matplotlib
matplotlib.use('Agg')

import matplotlib.pyplot as plt

from pathlib import Path

# stable element ids so identical inputs give identical files
matplotlib.rcParams['svg.hashsalt'] = 'crashsurrogate'
SVG_METADATA = {'Date': None, 'Creator': None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata=SVG_METADATA)
    plt.close(fig)

    return path


def plot_rmse_curves(steps, path, title='Per-step displacement RMSE'):
    """RMSE_t per sample (thin) and its mean over samples (bold) against time"""
    fig, ax = plt.subplots(figsize=(6, 4))
    for sample_id, group in steps.groupby('sample_id'):
        ax.plot(group['time_ms'], group['rmse'], color='tab:blue', alpha=0.3, linewidth=0.8)

    mean = steps.groupby('time_ms')['rmse'].mean()
    ax.plot(mean.index, mean.values, color='tab:blue', linewidth=2.0, label='mean')

    ax.set_xlabel('time [ms]')
    ax.set_ylabel('RMSE [mm]')
    ax.set_title(title)
    ax.legend()

    return _save(fig, path)


def plot_survival_series(steps, path, title='Survival distance'):
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, (sample_id, group) in enumerate(steps.groupby('sample_id')):
        ax.plot(group['time_ms'], group['d_ref'], color='black', linewidth=0.8, label='reference' if k == 0 else None)
        ax.plot(group['time_ms'], group['d_pred'], color='tab:red', linestyle='--', linewidth=0.8, label='predicted' if k == 0 else None)

    ax.set_xlabel('time [ms]')
    ax.set_ylabel('d [mm]')
    ax.set_title(title)
    ax.legend()

    return _save(fig, path)


def plot_survival_scatter(steps, path, title='Final survival distance'):
    final = steps.loc[steps.groupby('sample_id')['t'].idxmax()]

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(final['d_ref'], final['d_pred'], color='tab:red', s=18)

    lo = min(final['d_ref'].min(), final['d_pred'].min())
    hi = max(final['d_ref'].max(), final['d_pred'].max())
    ax.plot([lo, hi], [lo, hi], color='grey', linewidth=0.8)

    ax.set_xlabel('reference d_T [mm]')
    ax.set_ylabel('predicted d_T [mm]')
    ax.set_title(title)

    return _save(fig, path)


def write_report_plots(steps, out_dir, prefix='report'):
    out_dir = Path(out_dir)
    return [
        plot_rmse_curves(steps, out_dir / f'{prefix}_rmse.svg'),
        plot_survival_series(steps, out_dir / f'{prefix}_survival.svg'),
        plot_survival_scatter(steps, out_dir / f'{prefix}_survival_scatter.svg'),
    ]
