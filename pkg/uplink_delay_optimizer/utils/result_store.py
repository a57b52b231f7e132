"""
result_store.py
CSV and gnuplot .dat persistence of experiment rows and summaries.
"""

import os

import numpy as np
import pandas as pd

from uplink_delay_optimizer.utils.errors import OptimizerError

ROW_COLUMNS = [
    'scenario', 'sweep_variable', 'sweep_value', 'baseline', 'draw', 'seed', 'status',
    'delay_s', 'completion_times_s', 'regime', 'iterations', 'converged', 'monotone', 'message',
]
TIMING_COLUMNS = ['scenario', 'sweep_value', 'baseline', 'draw', 'wall_time_s']
SUMMARY_COLUMNS = ['sweep_value', 'baseline', 'mean_delay_s', 'std_delay_s', 'draws_ok', 'draws_failed']


def encode_times(times):
    return ";".join(repr(float(t)) for t in times)


def decode_times(text):
    if not isinstance(text, str) or not text:
        return ()
    return tuple(float(t) for t in text.split(";"))


def rows_to_frame(records):
    """
    Args:
        records (list of dict): One dict per result row, keys as ROW_COLUMNS.
    Returns:
        pd.DataFrame: Frame with the completion times encoded as text.
    """
    df = pd.DataFrame.from_records(records, columns=ROW_COLUMNS)
    df['completion_times_s'] = df['completion_times_s'].map(encode_times)
    return df


def frame_to_records(df):
    df = df.copy()
    for column in ('regime', 'message', 'completion_times_s'):
        df[column] = df[column].fillna('').astype(str)
    df['completion_times_s'] = df['completion_times_s'].map(decode_times)
    df['delay_s'] = df['delay_s'].astype(float)
    df['sweep_value'] = df['sweep_value'].astype(float)
    return df.to_dict(orient='records')


def summarize(df, sweep_values, baselines):
    """
    Mean delay per (sweep value, baseline) over the successful draws.
    Returns:
        pd.DataFrame: |sweep_values| x |baselines| rows in grid order.
    """
    ok = df[df['status'] == 'ok']
    stats = ok.groupby(['sweep_value', 'baseline'])['delay_s'].agg(['mean', 'std', 'count'])
    failed = df[df['status'] != 'ok'].groupby(['sweep_value', 'baseline']).size()
    records = []
    for value in sweep_values:
        for baseline in baselines:
            key = (float(value), baseline)
            has = key in stats.index
            records.append({
                'sweep_value': float(value),
                'baseline': baseline,
                'mean_delay_s': float(stats.loc[key, 'mean']) if has else np.nan,
                'std_delay_s': float(stats.loc[key, 'std']) if has else np.nan,
                'draws_ok': int(stats.loc[key, 'count']) if has else 0,
                'draws_failed': int(failed.get(key, 0)),
            })
    return pd.DataFrame.from_records(records, columns=SUMMARY_COLUMNS)


def _write_csv(df, path):
    try:
        df.to_csv(path, index=False, lineterminator="\n")
    except OSError as exc:
        raise OptimizerError(f"Cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except OSError as exc:
        raise OptimizerError(f"Cannot read {path}: {exc}") from exc


def write_dat(summary, baseline, path):
    """Two-column gnuplot data: sweep value and mean delay of one baseline."""
    part = summary[summary['baseline'] == baseline]
    lines = [f"# sweep_value mean_delay_s ({baseline})"]
    lines += [f"{v!r} {d!r}" for v, d in zip(part['sweep_value'].astype(float), part['mean_delay_s'].astype(float))]
    try:
        with open(path, 'w', encoding='utf-8', newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OptimizerError(f"Cannot write {path}: {exc}") from exc
    return path


def write_outputs(out_dir, rows_df, summary_df, timing_df=None, dat=True):
    """
    Write rows.csv, summary.csv, timing.csv and one .dat per baseline.
    Returns:
        list of str: Written paths.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OptimizerError(f"Cannot create output directory {out_dir}: {exc}") from exc
    paths = [
        _write_csv(rows_df, os.path.join(out_dir, 'rows.csv')),
        _write_csv(summary_df, os.path.join(out_dir, 'summary.csv')),
    ]
    if timing_df is not None:
        paths.append(_write_csv(timing_df, os.path.join(out_dir, 'timing.csv')))
    if dat:
        for baseline in summary_df['baseline'].unique():
            paths.append(write_dat(summary_df, baseline, os.path.join(out_dir, f"{baseline}.dat")))
    return paths


def load_rows(out_dir):
    """
    Read rows.csv back, merging wall times from timing.csv when present.
    Returns:
        pd.DataFrame: Parsed rows.
    """
    rows = read_csv(os.path.join(out_dir, 'rows.csv'))
    timing_path = os.path.join(out_dir, 'timing.csv')
    if os.path.exists(timing_path):
        timing = read_csv(timing_path)
        rows = rows.merge(timing, on=['scenario', 'sweep_value', 'baseline', 'draw'], how='left')
    return rows
