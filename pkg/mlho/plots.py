import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

# Fixed salt and no date keep SVG output identical across runs
matplotlib.rcParams['svg.hashsalt'] = 'mlho'
SVG_METADATA = {'Date': None}


def savefig(fig, out_dir, name, ext='svg'):
    path = os.path.join(out_dir, '%s.%s' % (name, ext))
    if not os.path.exists(os.path.dirname(path)):
        os.makedirs(os.path.dirname(path))
    fig.savefig(path, metadata=SVG_METADATA if ext == 'svg' else None)
    plt.close(fig)
    return path


def setup(figsize=None):
    if figsize is not None:
        plt.rc('figure', figsize=figsize)
    sns.set_style('white')
    sns.set_style('ticks')


def scenarios(probabilities):
    """Bar chart of the fraction of patients in each severity scenario."""
    data = pd.DataFrame(list(probabilities.items()),
                        columns=['Scenario', 'Fraction of patients'])
    fig = plt.figure()
    sns.barplot(x='Scenario', y='Fraction of patients', data=data,
                color='0.6')
    plt.xticks(rotation=30, ha='right')
    sns.despine()
    fig.tight_layout()
    return fig


def auc_boxes(aucs):
    """Test AUC per outcome and feature class, medians printed on top."""
    fig = plt.figure()
    order = sorted(aucs['outcome'].unique())
    hue_order = [fc for fc in ('demographic', 'clinical', 'combined')
                 if fc in set(aucs['feature_class'])]
    ax = sns.boxplot(x='outcome', y='auc', hue='feature_class', data=aucs,
                     order=order, hue_order=hue_order)
    medians = aucs.groupby(['outcome', 'feature_class'])['auc'].median()
    width = 0.8 / len(hue_order)
    for i, outcome in enumerate(order):
        for j, fc in enumerate(hue_order):
            if (outcome, fc) not in medians.index:
                continue
            x = i - 0.4 + width * (j + 0.5)
            m = medians[outcome, fc]
            ax.text(x, m, "%.2f" % m, ha='center', va='bottom', fontsize=7)
    ax.set_xlabel("")
    ax.set_ylabel("Test AUC")
    sns.despine()
    fig.tight_layout()
    return fig


def reliability(curves, outcome):
    """Observed against predicted risk for each feature class."""
    fig, ax = plt.subplots()
    ax.plot([0, 1], [0, 1], c='k', ls=':')
    for fc, curve in sorted(curves.items()):
        full = curve.count > 0
        ax.plot(curve.mean_pred[full], curve.obs_frac[full], marker='o',
                label=fc)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("Predicted probability of %s" % outcome)
    ax.set_ylabel("Observed fraction")
    ax.legend(loc='upper left', frameon=False)
    sns.despine()
    fig.tight_layout()
    return fig


def render_all(phase1, phase2, out_dir):
    """Save every figure for a run as SVG; return the paths."""
    setup()
    paths = [
        savefig(scenarios(phase2.scenarios), out_dir, 'scenarios'),
        savefig(auc_boxes(phase2.aucs), out_dir, 'auc-phase2'),
    ]
    aucs1 = phase1.aucs.assign(feature_class='clinical')
    paths.append(savefig(auc_boxes(aucs1), out_dir, 'auc-phase1'))
    outcomes = sorted({o for o, _ in phase2.calibration})
    for outcome in outcomes:
        curves = {fc: c for (o, fc), c in phase2.calibration.items()
                  if o == outcome and np.any(c.count > 0)}
        paths.append(savefig(reliability(curves, outcome), out_dir,
                             'calibration-%s' % outcome))
    return paths
