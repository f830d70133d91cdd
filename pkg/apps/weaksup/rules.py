"""
===============================================================================
ARCHIVO: apps/weaksup/rules.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Funciones de etiquetado (LFs) con plantilla de explicación, definidas en
    un fichero INI. Cada sección [lf:<id>] declara una regla, la etiqueta
    que emite y la plantilla de explicación.

FORMATO DEL FICHERO:
    [lf:subset_entail]
    rule = subset(b, a)
    label = entailment
    template = {B} is contained in {A}

LENGUAJE DE REGLAS:
    has(seg, "tok", ...)        algún token aparece en el segmento
    substr(seg, "texto")        el texto aparece como subcadena
    subset(seg1, seg2)          tokens(seg1) ⊆ tokens(seg2)
    missing(seg1, seg2, n[, m]) entre n y m tokens de seg1 no están en seg2
    window(k[, "tok", ...])     dos entidades marcadas (@) a distancia ≤ k,
                                con alguno de los tokens entre ellas
    and / or / not / ( )

    seg ∈ {a, b, any}. Todo se compara en minúsculas.

RANURAS DE PLANTILLA:
    {A}, {B}      segmentos de entrada
    {E1}, {E2}    primera y segunda entidad marcada
    {keyword}     token que hizo disparar la regla (has, window, missing)

ERRORES:
    Una regla o plantilla mal formada lanza BadRule al cargar, nunca al
    aplicar. Si una ranura no se puede rellenar en un registro concreto, la
    instanciación devuelve None y el registro se descarta.

===============================================================================
"""

import configparser
import logging
import re
import string
from dataclasses import dataclass, field
from pathlib import Path

from apps.appshell.vocab import normalize
from apps.numcore.exceptions import BadRule

logger = logging.getLogger(__name__)

ABSTAIN = -1
SEGMENTS = ('a', 'b', 'any')
SLOTS = ('A', 'B', 'E1', 'E2', 'keyword')
KEYWORD_ATOMS = ('has', 'window', 'missing')

_TOKEN_RE = re.compile(r'\s*(?:(?P<string>"[^"]*")|(?P<number>\d+)|(?P<name>[A-Za-z_]\w*)|(?P<punct>[(),]))')


# =============================================================================
# VISTA DE UN REGISTRO
# =============================================================================

@dataclass
class InputView:
    """Tokens y textos de un registro, preparados una vez para todas las LFs."""

    texts: dict
    tokens: dict
    entities: list = field(default_factory=list)

    @classmethod
    def of(cls, example) -> 'InputView':
        a = normalize(example.segment_a)
        b = normalize(example.segment_b) if example.segment_b else []
        texts = {'a': ' '.join(a), 'b': ' '.join(b), 'any': ' '.join(a + b)}
        tokens = {'a': a, 'b': b, 'any': a + b}
        entities = [(i, token) for i, token in enumerate(tokens['any']) if token.startswith('@') and len(token) > 1]
        return cls(texts=texts, tokens=tokens, entities=entities)

    def slot(self, name: str, bindings: dict):
        if name == 'A':
            return self.texts['a'] or None
        if name == 'B':
            return self.texts['b'] or None
        if name == 'E1':
            return self.entities[0][1] if self.entities else None
        if name == 'E2':
            return self.entities[1][1] if len(self.entities) > 1 else None
        return bindings.get(name)


# =============================================================================
# ANALIZADOR DE REGLAS
# =============================================================================

def _lex(text: str) -> list:
    tokens, position = [], 0
    text = text.strip()
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if not match or match.end() == position:
            raise BadRule(f'Carácter inesperado en la regla {text!r} (posición {position})')
        position = match.end()
        kind = match.lastgroup
        value = match.group(kind)
        if kind == 'string':
            value = value[1:-1].lower()
        elif kind == 'number':
            value = int(value)
        tokens.append((kind, value))
    return tokens


class _Parser:
    """Descenso recursivo: or → and → not → átomo. Produce un callable view → bindings | None."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.index = 0
        self.binds_keyword = False

    def error(self, message):
        return BadRule(f'{message} en la regla {self.text!r}')

    def peek(self):
        return self.tokens[self.index] if self.index < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        token = self.peek()
        if token[0] is None or (kind and token[0] != kind) or (value is not None and token[1] != value):
            expected = value if value is not None else kind
            raise self.error(f'Se esperaba {expected!r} y se encontró {token[1]!r}')
        self.index += 1
        return token[1]

    def parse(self):
        if not self.tokens:
            raise self.error('Regla vacía')
        node = self.parse_or()
        if self.index != len(self.tokens):
            raise self.error(f'Sobra {self.peek()[1]!r}')
        return node

    def parse_or(self):
        nodes = [self.parse_and()]
        while self.peek() == ('name', 'or'):
            self.take()
            nodes.append(self.parse_and())
        if len(nodes) == 1:
            return nodes[0]

        def any_of(view):
            for node in nodes:
                bindings = node(view)
                if bindings is not None:
                    return bindings
            return None
        return any_of

    def parse_and(self):
        nodes = [self.parse_not()]
        while self.peek() == ('name', 'and'):
            self.take()
            nodes.append(self.parse_not())
        if len(nodes) == 1:
            return nodes[0]

        def all_of(view):
            merged = {}
            for node in nodes:
                bindings = node(view)
                if bindings is None:
                    return None
                for key, value in bindings.items():
                    merged.setdefault(key, value)
            return merged
        return all_of

    def parse_not(self):
        if self.peek() == ('name', 'not'):
            self.take()
            inner = self.parse_not()
            return lambda view: {} if inner(view) is None else None
        return self.parse_atom()

    def parse_atom(self):
        if self.peek() == ('punct', '('):
            self.take()
            node = self.parse_or()
            self.take('punct', ')')
            return node
        name = self.take('name')
        self.take('punct', '(')
        args = []
        if self.peek() != ('punct', ')'):
            args.append(self.take_arg())
            while self.peek() == ('punct', ','):
                self.take()
                args.append(self.take_arg())
        self.take('punct', ')')
        builder = getattr(self, f'atom_{name}', None)
        if builder is None:
            raise self.error(f'Predicado desconocido {name!r}')
        if name in KEYWORD_ATOMS:
            self.binds_keyword = True
        return builder(args)

    def take_arg(self):
        kind, value = self.peek()
        if kind in ('string', 'number', 'name'):
            self.index += 1
            return value
        raise self.error(f'Argumento inválido {value!r}')

    # -------------------------------------------------------------------------
    # Predicados
    # -------------------------------------------------------------------------

    def segment(self, value):
        if value not in SEGMENTS:
            raise self.error(f'Segmento desconocido {value!r} (use a, b o any)')
        return value

    def words(self, values, minimum=1):
        if len(values) < minimum or not all(isinstance(v, str) and v for v in values):
            raise self.error('Se esperaban palabras entre comillas')
        return tuple(values)

    def atom_has(self, args):
        if not args:
            raise self.error('has() necesita un segmento')
        segment = self.segment(args[0])
        words = self.words(args[1:])

        def has(view):
            for token in view.tokens[segment]:
                if token in words:
                    return {'keyword': token}
            return None
        return has

    def atom_substr(self, args):
        if len(args) != 2:
            raise self.error('substr() necesita segmento y texto')
        segment = self.segment(args[0])
        (needle,) = self.words(args[1:])
        return lambda view: {} if needle in view.texts[segment] else None

    def atom_subset(self, args):
        if len(args) != 2:
            raise self.error('subset() necesita dos segmentos')
        inner, outer = self.segment(args[0]), self.segment(args[1])

        def subset(view):
            tokens = view.tokens[inner]
            return {} if tokens and set(tokens) <= set(view.tokens[outer]) else None
        return subset

    def atom_missing(self, args):
        if len(args) not in (3, 4) or not all(isinstance(v, int) for v in args[2:]):
            raise self.error('missing() necesita dos segmentos y uno o dos enteros')
        inner, outer = self.segment(args[0]), self.segment(args[1])
        low = args[2]
        high = args[3] if len(args) == 4 else low
        if low > high:
            raise self.error('missing(): mínimo mayor que máximo')

        def missing(view):
            reference = set(view.tokens[outer])
            absent = [token for token in view.tokens[inner] if token not in reference]
            if absent and low <= len(absent) <= high:
                return {'keyword': absent[0]}
            return None
        return missing

    def atom_window(self, args):
        if not args or not isinstance(args[0], int):
            raise self.error('window() necesita una distancia entera')
        distance = args[0]
        words = self.words(args[1:], minimum=0)

        def window(view):
            if len(view.entities) < 2:
                return None
            (first, _), (second, _) = view.entities[0], view.entities[1]
            if second - first > distance:
                return None
            if not words:
                return {}
            for token in view.tokens['any'][first + 1:second]:
                if token in words:
                    return {'keyword': token}
            return None
        return window


def compile_rule(text: str):
    """
    RETORNA:
        (callable view → bindings | None, bool: la regla puede ligar {keyword})
    """
    parser = _Parser(text)
    node = parser.parse()
    return node, parser.binds_keyword


# =============================================================================
# FUNCIONES DE ETIQUETADO Y PLANTILLAS
# =============================================================================

@dataclass
class Template:
    text: str
    slots: tuple

    @classmethod
    def parse(cls, text: str, binds_keyword: bool, lf_id: str) -> 'Template':
        try:
            fields = [name for _, name, _, _ in string.Formatter().parse(text) if name is not None]
        except ValueError as exc:
            raise BadRule(f'[lf:{lf_id}] plantilla mal formada: {exc}') from exc
        for name in fields:
            if name not in SLOTS:
                raise BadRule(f'[lf:{lf_id}] ranura desconocida {{{name}}} (disponibles: {SLOTS})')
            if name == 'keyword' and not binds_keyword:
                raise BadRule(f'[lf:{lf_id}] {{keyword}} sin predicado que lo extraiga (has, window, missing)')
        return cls(text=text, slots=tuple(dict.fromkeys(fields)))

    def words(self) -> list:
        literal = ''.join(chunk for chunk, _, _, _ in string.Formatter().parse(self.text))
        return normalize(literal)

    def fill(self, view: InputView, bindings: dict):
        """Texto instanciado, o None si alguna ranura no tiene valor."""
        values = {}
        for name in self.slots:
            value = view.slot(name, bindings)
            if not value:
                return None
            values[name] = value
        return ' '.join(self.text.format(**values).split())


@dataclass
class LabelingFunction:
    id: str
    rule_text: str
    label: str
    template: Template
    rule: object = field(repr=False)
    label_id: int

    def evaluate(self, view: InputView):
        """Ligaduras de la regla si dispara; None si no."""
        return self.rule(view)

    def vote(self, view: InputView) -> int:
        return self.label_id if self.rule(view) is not None else ABSTAIN

    def explain(self, view: InputView):
        bindings = self.rule(view)
        if bindings is None:
            return None
        return self.template.fill(view, bindings)


def load_labeling_functions(path, labels) -> list:
    """
    Lee y compila las LFs de un fichero INI.

    PARÁMETROS:
        labels: nombres de etiqueta de la tarea; cada LF queda ligada a su
                id y una etiqueta desconocida es BadRule

    EXCEPCIONES:
        BadRule: fichero ilegible, sección sin regla/etiqueta/plantilla,
                 regla o plantilla mal formada, etiqueta desconocida, tarea sin etiquetas
    """
    labels = list(labels)
    if not labels:
        raise BadRule(f"{Path(path).name}: la tarea no declara etiquetas")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as exc:
        raise BadRule(f'No se pueden leer las LFs de {path}: {exc}') from exc

    lfs = []
    for section in parser.sections():
        if not section.startswith('lf:'):
            raise BadRule(f'{Path(path).name}: sección {section!r} no es [lf:<id>]')
        lf_id = section[3:].strip()
        block = parser[section]
        missing = [key for key in ('rule', 'label', 'template') if not block.get(key, '').strip()]
        if missing:
            raise BadRule(f'[lf:{lf_id}] faltan {missing}')
        rule, binds_keyword = compile_rule(block['rule'])
        label = block['label'].strip()
        if label not in labels:
            raise BadRule(f"[lf:{lf_id}] etiqueta desconocida {label!r} (tarea: {labels})")
        lfs.append(LabelingFunction(
            id=lf_id,
            rule_text=block['rule'].strip(),
            label=label,
            template=Template.parse(block['template'].strip(), binds_keyword, lf_id),
            rule=rule,
            label_id=labels.index(label),
        ))
    logger.info(f'{len(lfs)} funciones de etiquetado cargadas de {path}')
    return lfs


def template_words(lfs) -> list:
    """Palabras literales de las plantillas (para el vocabulario)."""
    words = []
    for lf in lfs:
        words += lf.template.words()
    return words
