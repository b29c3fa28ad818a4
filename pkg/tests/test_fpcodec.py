import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpcim.errors import ContractError
from fpcim.fpcodec import (
    E2M5,
    E3M4,
    FpCode,
    all_values,
    decode,
    decode_bits,
    dequantize_tensor,
    encode,
    encode_values,
    int8_dequantize,
    int8_quantize,
    quantize_tensor,
)

FORMATS = [E2M5, E3M4]


def enumerate_table(fmt):
    """Independent oracle: decoded value of every bit pattern, first principles."""
    table = []
    for bits in range(128):
        e = bits >> fmt.mantissa_bits
        m = bits & (fmt.mant_levels - 1)
        table.append(0.0 if bits == 0 else (1 + m / fmt.mant_levels) * 2**e)
    return np.array(table)


def nearest_oracle(x, fmt):
    """Brute force over all 128 decodable values."""
    table = enumerate_table(fmt)
    return int(np.argmin(np.abs(table - x)))


# ---------------------------------------------------------------- decode

def test_decode_known_pattern():
    code = FpCode.from_bit_string("1011110", E2M5)
    assert code.exponent == 2 and code.mantissa == 30
    assert decode(code) == 7.75


def test_decode_zero_code():
    assert decode(FpCode(0, 0, E2M5)) == 0.0


def test_decode_top_code():
    assert decode(FpCode.from_bit_string("1111111", E2M5)) == 15.75


@pytest.mark.parametrize("fmt", FORMATS, ids=lambda f: f.name)
def test_decode_matches_enumeration(fmt):
    got = decode_bits(np.arange(128), fmt)
    np.testing.assert_array_equal(got, enumerate_table(fmt))


@pytest.mark.parametrize("fmt", FORMATS, ids=lambda f: f.name)
def test_all_128_codes_distinct_and_increasing(fmt):
    vals = all_values(fmt)
    assert len(vals) == 128
    nonzero = vals[1:]
    assert len(np.unique(nonzero)) == 127
    # code-bit order == (exponent, mantissa) order == value order
    assert np.all(np.diff(nonzero) > 0)


# ---------------------------------------------------------------- encode

@pytest.mark.parametrize("fmt", FORMATS, ids=lambda f: f.name)
def test_round_trip_exhaustive(fmt):
    for bits in range(128):
        v = decode(FpCode.from_bits(bits, fmt))
        for mode in ("nearest", "ceiling"):
            res = encode(v, fmt, mode)
            assert res.code.to_bits() == bits, (bits, mode)
            assert not res.overflow
            assert res.underflow == (bits == 0 and False)


def test_encode_exact_value():
    res = encode(7.75, E2M5)
    assert res.code.bit_string() == "1011110"
    assert not res.underflow and not res.overflow


def test_encode_adc_scenario_value():
    # 5.111 is the analytic converter input of the transient scenario;
    # nearest representable is 5.125 = (1 + 9/32) * 4.
    assert nearest_oracle(5.111, E2M5) == (2 << 5) | 9
    res = encode(5.111, E2M5)
    assert (res.code.exponent, res.code.mantissa) == (2, 9)
    assert decode(res.code) == 5.125


def test_encode_overflow_clamps():
    res = encode(16.2, E2M5)
    assert res.code.bit_string() == "1111111"
    assert res.overflow and not res.underflow


def test_encode_small_values_flush_to_zero():
    for v in (1e-6, 0.1, 0.499):
        res = encode(v, E2M5)
        assert res.code.is_zero and res.underflow
    # above the zero/min-code midpoint the nearest code is non-zero
    res = encode(0.6, E2M5)
    assert res.code.to_bits() == 1 and not res.underflow


def test_encode_ceiling_mode():
    # hardware counter semantics: below 1 nothing is read out
    assert encode(0.9, E2M5, "ceiling").code.is_zero
    assert encode(0.9, E2M5, "ceiling").underflow
    res = encode(5.0001, E2M5, "ceiling")
    assert decode(res.code) == 5.125
    # exact values stay put
    assert decode(encode(5.125, E2M5, "ceiling").code) == 5.125
    # mantissa overflow carries into the exponent
    assert decode(encode(1.99, E2M5, "ceiling").code) == 2.0


def test_encode_rejects_negative():
    with pytest.raises(ContractError):
        encode(-1.0, E2M5)


@pytest.mark.parametrize("fmt", FORMATS, ids=lambda f: f.name)
def test_encode_matches_bruteforce_on_grid(fmt):
    xs = np.linspace(0.0, fmt.max_value * 1.05, 4001)
    bits, _, _ = encode_values(xs, fmt)
    table = enumerate_table(fmt)
    for x, b in zip(xs, bits):
        want = table[nearest_oracle(x, fmt)]
        got = table[b]
        # equal distance to the oracle's pick (ties allowed either way)
        assert abs(x - got) <= abs(x - want) + 1e-15


def test_encode_monotone_on_grid():
    xs = np.linspace(0.0, 17.0, 100_000)
    bits, _, _ = encode_values(xs, E2M5)
    vals = decode_bits(bits, E2M5)
    assert np.all(np.diff(vals) >= 0)


def test_relative_error_half_ulp():
    # over the decodable range: the zero code sacrifices 1.0, so the
    # half-ULP bound starts at the smallest non-zero code value
    xs = np.linspace(E2M5.min_nonzero, 15.96875, 100_000)
    bits, _, _ = encode_values(xs, E2M5)
    vals = decode_bits(bits, E2M5)
    rel = np.abs(xs - vals) / xs
    assert np.max(rel) <= 2.0**-6 + 1e-15


def test_sacrificed_unit_value():
    # 1.0 itself is not representable: nearest code is 1 + 2^-5, one full
    # mantissa step away (the price of the reserved zero code)
    res = encode(1.0, E2M5)
    assert decode(res.code) == 1.03125
    assert abs(1.0 - decode(res.code)) == 0.03125


@settings(max_examples=200, derandomize=True)
@given(st.integers(0, 127), st.sampled_from(FORMATS))
def test_round_trip_property(bits, fmt):
    v = decode(FpCode.from_bits(bits, fmt))
    assert encode(v, fmt).code.to_bits() == bits


@settings(max_examples=200, derandomize=True)
@given(st.floats(0, 20), st.floats(0, 20))
def test_encode_monotone_property(a, b):
    lo, hi = sorted((a, b))
    assert decode(encode(lo, E2M5).code) <= decode(encode(hi, E2M5).code)


# ---------------------------------------------------------------- tensors

def test_quantize_forced_scale():
    q = quantize_tensor(np.array([0.0, 7.75, 15.75]), E2M5, scale=1.0)
    assert [format(b, "07b") for b in q.codes] == ["0000000", "1011110", "1111111"]


def test_quantize_max_abs_scale():
    q = quantize_tensor(np.array([31.5]), E2M5)
    assert q.scale.scale == 0.5
    assert q.codes[0] == 0b1111111


def test_quantize_all_zero_tensor():
    q = quantize_tensor(np.zeros(5), E2M5)
    assert q.scale.scale == 1.0
    assert np.all(q.codes == 0)


def test_quantize_empty_rejected():
    with pytest.raises(ContractError):
        quantize_tensor(np.array([]), E2M5)


def test_dequantize_round_trip_representable():
    x = np.array([0.0, 1.03125, 2.0, -7.75, 15.75])
    q = quantize_tensor(x, E2M5, scale=1.0)
    np.testing.assert_array_equal(dequantize_tensor(q, E2M5), x)


def test_quantizer_mse_against_bruteforce_oracle():
    # Brute-force nearest-value quantizer, independent of encode_values.
    rng = np.random.default_rng(42)
    x = rng.laplace(0.0, 1.0, 4096)
    table = enumerate_table(E2M5)
    order = np.argsort(table)
    scale = E2M5.max_value / np.max(np.abs(x))
    xs = np.abs(x) * scale
    pos = np.searchsorted(table[order], xs).clip(1, 127)
    lo, hi = table[order][pos - 1], table[order][np.minimum(pos, 127)]
    oracle_vals = np.where(xs - lo <= hi - xs, lo, hi) / scale * np.sign(x)
    oracle_mse = float(np.mean((x - oracle_vals) ** 2))

    q = quantize_tensor(x, E2M5)
    mse = float(np.mean((x - dequantize_tensor(q, E2M5)) ** 2))
    assert mse == pytest.approx(oracle_mse, rel=1e-12)

    # frozen oracle values for this seed (magnitude documented for the
    # format comparison): the hardware format's flush-to-zero region
    # dominates on zero-centered data
    assert oracle_mse == pytest.approx(8.0976e-3, rel=1e-3)
    i8 = int8_quantize(x)
    mse_i8 = float(np.mean((x - int8_dequantize(i8)) ** 2))
    assert mse_i8 == pytest.approx(7.644e-5, rel=1e-3)


# ---------------------------------------------------------------- int8

def test_int8_endpoints():
    q = int8_quantize(np.array([0.0, 4.0]), max_value=4.0)
    assert q.codes[0] == 0 and q.codes[1] == 255
    np.testing.assert_array_equal(int8_dequantize(q), [0.0, 4.0])


def test_int8_half_lsb_bound():
    rng = np.random.default_rng(7)
    x = rng.uniform(-3, 3, 10_000)
    q = int8_quantize(x)
    err = np.abs(x - int8_dequantize(q))
    lsb = q.max_value / 255
    assert np.max(err) <= 0.5 * lsb * (1 + 1e-12)


def test_int8_zero_tensor():
    q = int8_quantize(np.zeros(3))
    assert np.all(q.codes == 0)
    np.testing.assert_array_equal(int8_dequantize(q), np.zeros(3))


# ---------------------------------------------------------------- codes

def test_code_bit_layout():
    # exponent in the high bits of the 7: [e..e m..m]
    code = FpCode(2, 30, E2M5)
    assert code.to_bits() == 0b1011110
    assert FpCode.from_bits(0b1011110, E2M5) == code
    code34 = FpCode(5, 9, E3M4)
    assert code34.to_bits() == (5 << 4) | 9


def test_code_validation():
    with pytest.raises(ContractError):
        FpCode(4, 0, E2M5)
    with pytest.raises(ContractError):
        FpCode(0, 32, E2M5)
    with pytest.raises(ContractError):
        FpCode.from_bit_string("10111100", E2M5)
