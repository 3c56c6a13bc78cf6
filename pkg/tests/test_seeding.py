from pseudoreplay.seeding import derive_seed


def test_same_inputs_same_seed():
    assert derive_seed(42, "task", 1) == derive_seed(42, "task", 1)


def test_role_parts_change_the_seed():
    base = derive_seed(42, "task", 1)
    assert derive_seed(42, "task", 2) != base
    assert derive_seed(42, "init", 1) != base
    assert derive_seed(43, "task", 1) != base


def test_part_boundaries_matter():
    # ("ab", "c") and ("a", "bc") must not collide
    assert derive_seed(0, "ab", "c") != derive_seed(0, "a", "bc")


def test_result_fits_unsigned_64_bits():
    for parts in [(), ("x",), ("strategy", "rcl", "rep", 4)]:
        value = derive_seed(7, *parts)
        assert 0 <= value < 2**64
