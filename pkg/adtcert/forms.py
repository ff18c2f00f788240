"""
Scenario file schema

The sections of a scenario record are validated with WTForms form classes,
fed from the parsed YAML mapping instead of request data. Field values keep
their YAML types; the validators below check them.
"""

import numbers

from wtforms import Field, Form, FormField
from wtforms.validators import AnyOf, DataRequired, NumberRange, StopValidation, ValidationError


class ValueField(Field):
    """Field holding a parsed YAML value as is"""

    def process_formdata(self, valuelist):
        if valuelist:
            self.data = valuelist[0]


# ==================== Validators ====================

def optional(form, field):
    """Stop the chain when the key is absent"""
    if field.data is None:
        field.errors[:] = []
        raise StopValidation()


def number(form, field):
    if isinstance(field.data, bool) or not isinstance(field.data, numbers.Real):
        raise StopValidation('Must be a number')


def integer(form, field):
    if isinstance(field.data, bool) or not isinstance(field.data, numbers.Integral):
        raise StopValidation('Must be an integer')


def boolean(form, field):
    if not isinstance(field.data, bool):
        raise StopValidation('Must be true or false')


def mapping(form, field):
    if not isinstance(field.data, dict):
        raise StopValidation('Must be a mapping')


def _is_vector(value):
    return isinstance(value, (list, tuple)) and all(
        isinstance(v, numbers.Real) and not isinstance(v, bool) for v in value)


def vector(form, field):
    if not _is_vector(field.data) or not field.data:
        raise StopValidation('Must be a non-empty list of numbers')


def number_list(form, field):
    if not _is_vector(field.data):
        raise StopValidation('Must be a list of numbers')


def matrix(value):
    """True for a non-empty rectangular list of numeric rows"""
    if not isinstance(value, (list, tuple)) or not value:
        return False
    if not all(_is_vector(row) and row for row in value):
        return False
    return len({len(row) for row in value}) == 1


def positive(form, field):
    if not field.data > 0:
        raise ValidationError('Must be positive')


def schedule_list(form, field):
    """[[t, p], ...] with nondecreasing nonnegative times"""
    rows = field.data
    if not isinstance(rows, list):
        raise StopValidation('Must be a list of [time, mode] pairs')
    last = 0.0
    for row in rows:
        if not (isinstance(row, (list, tuple)) and len(row) == 2 and _is_vector(row)):
            raise ValidationError('Every entry must be a [time, mode] pair')
        if row[0] < last:
            raise ValidationError('Switch times must be nonnegative and nondecreasing')
        last = row[0]


def linear_mode(record):
    """Errors of an {A, B, F, G, lipschitz_c} record"""
    errors = []
    for key in ('A', 'B', 'F', 'G'):
        if key not in record:
            errors.append(f"missing matrix {key}")
        elif not matrix(record[key]):
            errors.append(f"{key} must be a rectangular numeric matrix")
    if 'lipschitz_c' in record:
        value = record['lipschitz_c']
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value < float('inf'):
            errors.append('lipschitz_c must be a nonnegative number')
    unknown = set(record) - {'A', 'B', 'F', 'G', 'lipschitz_c'}
    if unknown:
        errors.append(f"unknown keys {sorted(unknown)}")
    return errors


def mode_table(form, field):
    """{mode: {linear: {A, B, F, G}} | {builtin: name}}"""
    modes = field.data
    if not isinstance(modes, dict) or not modes:
        raise StopValidation('Must map mode numbers to mode definitions')
    for p, entry in modes.items():
        if isinstance(p, bool) or not isinstance(p, int):
            raise ValidationError(f"Mode key {p!r} must be an integer")
        if not isinstance(entry, dict) or len(entry) != 1 or next(iter(entry)) not in ('linear', 'builtin'):
            raise ValidationError(f"Mode {p} must have exactly one of 'linear' or 'builtin'")
        if 'builtin' in entry and not isinstance(entry['builtin'], str):
            raise ValidationError(f"Mode {p}: builtin must be a name")
        if 'linear' in entry:
            if not isinstance(entry['linear'], dict):
                raise ValidationError(f"Mode {p}: linear must be a mapping")
            errors = linear_mode(entry['linear'])
            if errors:
                raise ValidationError(f"Mode {p}: {'; '.join(errors)}")


# ==================== Sections ====================

class SystemForm(Form):
    modes = ValueField('Modes', validators=[mode_table])
    jumps = ValueField('Jump maps', validators=[optional, AnyOf(['identity', 'halving'])])


class CertificateForm(Form):
    source = ValueField('Source', validators=[optional, AnyOf(['auto-linear', 'builtin', 'explicit'])])
    modes = ValueField('Explicit certificates', validators=[optional, mapping])
    Q_c = ValueField('Q_c', validators=[optional])
    Q_o = ValueField('Q_o', validators=[optional])


class AdtForm(Form):
    tau_a = ValueField('Average dwell-time', validators=[optional, number, positive])
    N0 = ValueField('Chatter bound', validators=[optional, number, NumberRange(min=1)])
    tau0 = ValueField('Initial timer', validators=[optional, number, NumberRange(min=0)])
    epsilon = ValueField('Bound margin', validators=[optional, number, NumberRange(min=0)])
    schedule = ValueField('Scheduled switches', validators=[optional, schedule_list])


class SimForm(Form):
    dt_base = ValueField('Step', validators=[optional, number, positive])
    event_tol = ValueField('Event tolerance', validators=[optional, number, positive])
    horizon_T = ValueField('Horizon time', validators=[optional, number, NumberRange(min=0)])
    horizon_J = ValueField('Horizon jumps', validators=[optional, integer, NumberRange(min=1)])
    seed = ValueField('Seed', validators=[optional, integer, NumberRange(min=0)])
    mode0 = ValueField('Initial mode', validators=[optional, integer])
    x0 = ValueField('Initial x', validators=[optional, vector])
    e0 = ValueField('Initial e', validators=[optional, vector])
    z0 = ValueField('Initial z', validators=[optional, vector])


class CheckForm(Form):
    samples = ValueField('Samples', validators=[optional, integer, NumberRange(min=1)])
    box = ValueField('Box', validators=[optional, number, positive])
    tol = ValueField('Tolerance', validators=[optional, number, NumberRange(min=0)])
    w_tol = ValueField('W tolerance', validators=[optional, number, positive])


class IssForm(Form):
    levels = ValueField('Disturbance levels', validators=[optional, number_list])
    n_runs = ValueField('Runs per level', validators=[optional, integer, NumberRange(min=1)])
    hold = ValueField('Disturbance hold time', validators=[optional, number, positive])
    horizon_T = ValueField('Trial horizon', validators=[optional, number, positive])


class SampledForm(Form):
    loop = ValueField('Loop', validators=[optional, AnyOf(['two_mode'])])
    epsilon = ValueField('Epsilon', validators=[optional, number, NumberRange(min=0, max=0.5)])
    eta0 = ValueField('Initial filter state', validators=[optional, number, NumberRange(min=0)])
    admissible = ValueField('Admissible gains', validators=[optional, boolean])
    jump_priority = ValueField('Jump priority', validators=[optional])


class OutputForm(Form):
    name = ValueField('Name', validators=[optional])
    formats = ValueField('Formats', validators=[optional])

    def validate_formats(self, field):
        if field.data is None:
            return
        if not isinstance(field.data, list) or not set(field.data) <= {'csv', 'yaml'}:
            raise ValidationError("Formats must be a list drawn from 'csv' and 'yaml'")


class ScenarioForm(Form):
    name = ValueField('Name', validators=[DataRequired()])
    kind = ValueField('Kind', validators=[DataRequired(), AnyOf(['cascade', 'sampled'])])
    system = FormField(SystemForm)
    certificate = FormField(CertificateForm)
    adt = FormField(AdtForm)
    sim = FormField(SimForm)
    check = FormField(CheckForm)
    iss = FormField(IssForm)
    sampled = FormField(SampledForm)
    output = FormField(OutputForm)


SECTIONS = ('system', 'certificate', 'adt', 'sim', 'check', 'iss', 'sampled', 'output')
REQUIRED_SECTIONS = {'cascade': ('system', 'certificate'), 'sampled': ('sampled',)}


# ==================== Entry point ====================

def unknown_keys(form_class, record, path=''):
    """Keys of record (recursively through FormFields) that the form does not declare"""
    declared = {name: field for name, field in vars(form_class).items()
                if hasattr(field, 'field_class')}
    found = []
    for key, value in record.items():
        if key not in declared:
            found.append(f"{path}{key}")
        elif declared[key].field_class is FormField and isinstance(value, dict):
            found.extend(unknown_keys(declared[key].args[0], value, f"{path}{key}."))
    return found


def _flatten_errors(errors, prefix=''):
    out = []
    for key, value in errors.items():
        if isinstance(value, dict):
            out.extend(_flatten_errors(value, f"{prefix}{key}."))
        else:
            out.extend(f"{prefix}{key}: {msg}" for msg in value)
    return out


def validate_record(record):
    """
    Validate a scenario record

    Args:
        record: parsed YAML mapping

    Returns:
        list of error strings (empty when the record is valid)
    """
    if not isinstance(record, dict) or not record:
        return ['scenario must be a non-empty mapping']
    errors = [f"{key}: unknown key" for key in unknown_keys(ScenarioForm, record)]
    for section in SECTIONS:
        if section in record and not isinstance(record[section], dict):
            errors.append(f"{section}: must be a mapping")
    if errors:
        return errors
    data = {key: record.get(key) for key in ('name', 'kind')}
    data.update({section: record.get(section, {}) for section in SECTIONS})
    form = ScenarioForm(data=data)
    if not form.validate():
        errors.extend(_flatten_errors(form.errors))
    for section in REQUIRED_SECTIONS.get(record.get('kind'), ()):
        if not record.get(section):
            errors.append(f"{section}: required for {record['kind']} scenarios")
    return errors
