"""
===============================================================================
ARCHIVO: apps/evalkit/bench.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Benchmark de latencia de decodificación de una sola secuencia (lote 1,
    un hilo): NAR frente a AR, y escalado de la latencia con la longitud
    de salida.

PROTOCOLO:
    - Reloj monotónico (perf_counter_ns) alrededor de la llamada completa
      de generación
    - WARMUP decodificaciones descartadas antes de medir
    - Resumen: mediana de las medias de BENCH_GROUPS grupos consecutivos
    - Las dos variantes se alternan ejemplo a ejemplo para repartir la
      deriva térmica y de caché entre ambas
    - speedup = latencia_AR / latencia_NAR

ESCALADO:
    Para cada T de BENCH_LENGTHS se fuerza una salida de T tokens (NAR con
    fertilidades que suman T, AR con EOS bloqueado) y se ajusta una recta
    latencia ~ T. Se informa de ambas pendientes y de su cociente.

===============================================================================
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from apps.numcore.exceptions import BadConfig, EmptyEval

logger = logging.getLogger(__name__)


def median_of_means(samples, groups: int) -> float:
    """
    EJEMPLO:
        >>> median_of_means([1, 1, 100, 1, 1, 1], groups=3)
        1.0
    """
    samples = np.asarray(samples, dtype=np.float64)
    if not samples.size:
        raise EmptyEval('No hay mediciones de latencia')
    groups = max(1, min(int(groups), samples.size))
    return float(np.median([chunk.mean() for chunk in np.array_split(samples, groups)]))


@dataclass
class BenchResult:
    latency_a: float
    latency_b: float
    rows: list = field(default_factory=list)
    names: tuple = ('a', 'b')

    @property
    def speedup(self) -> float:
        """Cuántas veces es más rápida la variante a que la b."""
        return self.latency_b / self.latency_a if self.latency_a else float('nan')

    def to_dict(self) -> dict:
        first, second = self.names
        return {
            f'latency_{first}_ns': round(self.latency_a, 1),
            f'latency_{second}_ns': round(self.latency_b, 1),
            'speedup': round(self.speedup, 4),
            'examples': len(self.rows),
        }


def bench_callables(fn_a, fn_b, inputs, warmup=10, groups=5, names=('a', 'b'), lengths=None) -> BenchResult:
    """
    Mide dos callables sobre las mismas entradas, alternándolos.

    PARÁMETROS:
        lengths: callable opcional (resultado de la llamada) → longitud emitida,
                 para las filas del CSV

    RETORNA:
        BenchResult con una fila (ejemplo, variante, longitud, latencia_ns)
        por medición
    """
    inputs = list(inputs)
    if not inputs:
        raise EmptyEval('Conjunto de benchmark vacío')
    for i in range(int(warmup)):
        fn_a(inputs[i % len(inputs)])
        fn_b(inputs[i % len(inputs)])

    timings = {names[0]: [], names[1]: []}
    rows = []
    for index, argument in enumerate(inputs):
        for name, fn in zip(names, (fn_a, fn_b)):
            start = time.perf_counter_ns()
            result = fn(argument)
            elapsed = time.perf_counter_ns() - start
            timings[name].append(elapsed)
            length = lengths(result) if lengths else None
            rows.append({'example': index, 'variant': name, 'length': length, 'latency_ns': elapsed})
    return BenchResult(
        latency_a=median_of_means(timings[names[0]], groups),
        latency_b=median_of_means(timings[names[1]], groups),
        rows=rows,
        names=tuple(names),
    )


def bench_latency(model_nar, model_ar, sources, warmup=10, groups=5) -> BenchResult:
    """
    Latencia media por ejemplo de generate() (NAR) y generate_autoregressive()
    (AR) sobre las mismas entradas. speedup = AR / NAR.
    """
    return bench_callables(
        lambda x: model_nar.generate(x),
        lambda x: model_ar.generate_autoregressive(x),
        sources, warmup=warmup, groups=groups, names=('nar', 'ar'),
        lengths=lambda output: output.length,
    )


# =============================================================================
# ESCALADO CON LA LONGITUD
# =============================================================================

def spread_fertility(source_length: int, total: int, max_fertility: int) -> np.ndarray:
    """Fertilidades lo más uniformes posible con ΣF = total."""
    if total > source_length * max_fertility:
        raise BadConfig(f'T={total} no cabe en S·F_max = {source_length}·{max_fertility}')
    base, extra = divmod(total, source_length)
    fertility = np.full(source_length, base, dtype=np.int64)
    fertility[:extra] += 1
    return fertility


def fit_slope(lengths, latencies) -> float:
    slope, _ = np.polyfit(np.asarray(lengths, dtype=np.float64), np.asarray(latencies, dtype=np.float64), 1)
    return float(slope)


def length_scaling(model_nar, model_ar, source, lengths, repeats=20, warmup=10, groups=5) -> dict:
    """
    Latencia frente a la longitud emitida T.

    RETORNA:
        {lengths, nar_ns, ar_ns, nar_slope, ar_slope, slope_ratio}
    """
    source = np.asarray(source, dtype=np.int64)
    max_fertility = model_nar.config.max_fertility
    nar_ns, ar_ns = [], []
    for length in lengths:
        fertility = spread_fertility(len(source), int(length), max_fertility)
        result = bench_callables(
            lambda x, f=fertility: model_nar.generate(x, fertility=f),
            lambda x, t=int(length): model_ar.generate_autoregressive(x, max_length=t, ignore_eos=True),
            [source] * repeats, warmup=warmup, groups=groups, names=('nar', 'ar'),
        )
        nar_ns.append(result.latency_a)
        ar_ns.append(result.latency_b)
        logger.info(f'T={length}: NAR {result.latency_a / 1e6:.3f} ms, AR {result.latency_b / 1e6:.3f} ms')

    nar_slope, ar_slope = fit_slope(lengths, nar_ns), fit_slope(lengths, ar_ns)
    return {
        'lengths': [int(t) for t in lengths],
        'nar_ns': [round(v, 1) for v in nar_ns],
        'ar_ns': [round(v, 1) for v in ar_ns],
        'nar_slope': round(nar_slope, 3),
        'ar_slope': round(ar_slope, 3),
        'slope_ratio': round(ar_slope / abs(nar_slope), 3) if nar_slope else float('inf'),
    }


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=['example', 'variant', 'length', 'latency_ns'])
        writer.writeheader()
        writer.writerows(rows)
    return path
