"""Regenerate the checked-in mean-field and integral fixtures.

Requires pyscf. Run from this directory:

    python3 generate_fixtures.py

Each hydrogen chain is computed with RHF/STO-3G. The bundle files follow the
container layout documented in README.md; the FCIDUMP files are written in the
canonical MO basis and carry orbital energies as `eps i 0 0 0` lines.
Reference energies (HF, MP2, FCI) from pyscf go to references.json and are used
only as independent cross-checks.
"""

import json

import numpy as np
from pyscf import ao2mo, fci, gto, mp, scf


def chain(n, spacing):
    atoms = [("H", (0.0, 0.0, i * spacing)) for i in range(n)]
    mol = gto.M(atom=atoms, basis="sto-3g", unit="Angstrom", verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-13
    mf.conv_tol_grad = 1e-10
    mf.kernel()
    assert mf.converged
    return mol, mf


def fmt(x):
    return repr(float(x))


def write_bundle(path, label, mol, mf):
    n = mol.nao_nr()
    S = mol.intor("int1e_ovlp")
    h = mf.get_hcore()
    eri = mol.intor("int2e").reshape(n, n, n, n)
    D = mf.make_rdm1()
    with open(path, "w") as f:
        f.write("# ewfsqd mean-field bundle\n")
        f.write("format ewfsqd-meanfield 1\n")
        f.write(f"label {label}\n")
        f.write(f"n_ao {n}\n")
        f.write(f"n_mo {mf.mo_coeff.shape[1]}\n")
        f.write(f"n_elec {mol.nelectron}\n")
        f.write(f"scalar e_nuc {fmt(mol.energy_nuc())}\n")
        f.write(f"scalar e_hf {fmt(mf.e_tot)}\n")
        f.write(f"ints ao_atom {n}\n")
        f.write(" ".join(str(lab[0]) for lab in mol.ao_labels(fmt=False)) + "\n")
        for name, mat in (("S", S), ("C", mf.mo_coeff), ("D", D), ("h", h)):
            f.write(f"matrix {name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                f.write(" ".join(fmt(v) for v in row) + "\n")
        f.write(f"vector eps {len(mf.mo_energy)}\n")
        f.write(" ".join(fmt(v) for v in mf.mo_energy) + "\n")
        f.write(f"tensor4 eri {n} {n} {n} {n}\n")
        for p in range(n):
            for q in range(n):
                f.write(" ".join(fmt(v) for v in eri[p, q].ravel()) + "\n")
        f.write("end\n")


def write_fcidump(path, mol, mf):
    C = mf.mo_coeff
    norb = C.shape[1]
    h1 = C.T @ mf.get_hcore() @ C
    eri = ao2mo.restore(1, ao2mo.full(mol, C), norb)
    with open(path, "w") as f:
        f.write(f" &FCI NORB={norb},NELEC={mol.nelectron},MS2=0,\n")
        f.write("  ORBSYM=" + "1," * norb + "\n  ISYM=1,\n &END\n")
        for p in range(norb):
            for r in range(p + 1):
                for q in range(norb):
                    for s in range(q + 1):
                        if p * (p + 1) // 2 + r < q * (q + 1) // 2 + s:
                            continue
                        v = eri[p, r, q, s]
                        if abs(v) > 1e-14:
                            f.write(f"{v:.17e} {p+1} {r+1} {q+1} {s+1}\n")
        for p in range(norb):
            for r in range(p + 1):
                if abs(h1[p, r]) > 1e-14:
                    f.write(f"{h1[p, r]:.17e} {p+1} {r+1} 0 0\n")
        for p in range(norb):
            f.write(f"{mf.mo_energy[p]:.17e} {p+1} 0 0 0\n")
        f.write(f"{mol.energy_nuc():.17e} 0 0 0 0\n")


def references(mol, mf):
    e_mp2 = mp.MP2(mf).kernel()[0]
    cis = fci.FCI(mf)
    cis.conv_tol = 1e-13
    e_fci = cis.kernel()[0]
    return {"e_hf": mf.e_tot, "e_mp2_corr": e_mp2, "e_fci": e_fci, "e_nuc": mol.energy_nuc()}


def main():
    refs = {}
    for name, n, spacing, bundle in (
        ("h2", 2, 0.74, False),
        ("h4_chain", 4, 1.0, True),
        ("h6_chain", 6, 1.0, True),
        ("h8_chain", 8, 1.0, False),
    ):
        mol, mf = chain(n, spacing)
        write_fcidump(f"{name}.fcidump", mol, mf)
        if bundle:
            write_bundle(f"{name}.bundle", name, mol, mf)
        refs[name] = references(mol, mf)
    with open("references.json", "w") as f:
        json.dump(refs, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
