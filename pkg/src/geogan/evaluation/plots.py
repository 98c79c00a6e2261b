"""
Loss-curve graphs

Renders the per-step loss CSV written during training into PNG charts.
"""
import logging
from pathlib import Path
from typing import List, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

logger = logging.getLogger(__name__)

COMPONENT_COLORS = {
    'g_gan': '#3498db',
    'g_rec': '#e74c3c',
    'g_style': '#2ecc71',
}


def load_curve(csv_path: Union[str, Path]) -> pd.DataFrame:
    """Load a loss-curve CSV"""
    return pd.read_csv(csv_path)


def smooth(series: pd.Series, window: int) -> pd.Series:
    return series.rolling(window=max(1, window), min_periods=1).mean()


def plot_loss_curves(csv_path: Union[str, Path], out_dir: Union[str, Path]) -> List[Path]:
    """
    Generate the loss graphs of one run

    Args:
        csv_path: loss_curve.csv written by training
        out_dir: Directory to save graphs

    Returns:
        Paths of the written PNG files
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    df = load_curve(csv_path)
    if df.empty:
        logger.warning("Loss curve %s is empty; no graphs written", csv_path)
        return []

    plt.style.use('seaborn-v0_8-darkgrid')
    window = max(1, len(df) // 50)
    written = [
        create_adversarial_chart(df, out_dir, window),
        create_component_chart(df, out_dir, window),
    ]
    logger.info("Loss graphs saved to %s", out_dir)
    return written


def create_adversarial_chart(df: pd.DataFrame, out_dir: Path, window: int) -> Path:
    """Discriminator and generator objectives against the step"""
    fig, ax = plt.subplots(figsize=(10, 6))
    ax.plot(df['step'], df['d_loss'], color='#95a5a6', alpha=0.35, linewidth=0.8)
    ax.plot(df['step'], smooth(df['d_loss'], window), color='#34495e', linewidth=2, label='Discriminator')
    ax.plot(df['step'], df['g_total'], color='#f39c12', alpha=0.35, linewidth=0.8)
    ax.plot(df['step'], smooth(df['g_total'], window), color='#d35400', linewidth=2, label='Generator (total)')

    ax.set_xlabel('Step', fontsize=12, fontweight='bold')
    ax.set_ylabel('Loss', fontsize=12, fontweight='bold')
    ax.set_title('Adversarial Losses', fontsize=14, fontweight='bold')
    ax.legend()
    ax.grid(alpha=0.3)

    plt.tight_layout()
    path = out_dir / 'loss_adversarial.png'
    plt.savefig(path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return path


def create_component_chart(df: pd.DataFrame, out_dir: Path, window: int) -> Path:
    """One panel per generator loss component"""
    fig, axes = plt.subplots(1, 3, figsize=(16, 5))
    titles = {'g_gan': 'Adversarial', 'g_rec': 'Reconstruction', 'g_style': 'Style'}

    for ax, (column, title) in zip(axes, titles.items()):
        color = COMPONENT_COLORS[column]
        ax.plot(df['step'], df[column], color=color, alpha=0.3, linewidth=0.8)
        ax.plot(df['step'], smooth(df[column], window), color=color, linewidth=2)
        ax.set_title(title, fontsize=12, fontweight='bold')
        ax.set_xlabel('Step')
        ax.grid(alpha=0.3)
        if (df[column] == 0).all():
            ax.text(0.5, 0.5, 'weight 0', transform=ax.transAxes,
                    ha='center', va='center', fontsize=11, color='gray')

    plt.suptitle('Generator Loss Components', fontsize=14, fontweight='bold')
    plt.tight_layout()
    path = out_dir / 'loss_components.png'
    plt.savefig(path, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return path
