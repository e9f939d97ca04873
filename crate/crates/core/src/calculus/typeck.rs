//! Bidirectional type checking. Lambdas need an annotation unless their type
//! is known from context: a bind continuation, a checked position, or the
//! function of an application whose argument type can be synthesized.

use super::ast::{BinOp, Lit, Term, Type};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("type error: {msg} in `{subterm}`")]
pub struct TypeError {
    pub msg: String,
    pub subterm: String,
}

type Env = Vec<(String, Type)>;

fn err<T>(t: &Term, msg: impl Into<String>) -> Result<T, TypeError> {
    let mut subterm = t.to_string();
    if subterm.chars().count() > 80 {
        subterm = subterm.chars().take(77).collect::<String>() + "...";
    }
    Err(TypeError { msg: msg.into(), subterm })
}

fn lookup<'a>(env: &'a Env, x: &str) -> Option<&'a Type> {
    env.iter().rev().find(|(y, _)| y == x).map(|(_, t)| t)
}

/// Synthesize the type of a closed term.
pub fn type_of(t: &Term) -> Result<Type, TypeError> {
    synth(&mut Vec::new(), t)
}

/// Check a closed term against a type.
pub fn check_type(t: &Term, ty: &Type) -> Result<(), TypeError> {
    check(&mut Vec::new(), t, ty)
}

fn expect_eq(t: &Term, got: &Type, want: &Type) -> Result<(), TypeError> {
    if got == want {
        Ok(())
    } else {
        err(t, format!("expected {want}, found {got}"))
    }
}

fn expect_clio(t: &Term, ty: Type) -> Result<Type, TypeError> {
    match ty {
        Type::Clio(a) => Ok(*a),
        other => err(t, format!("expected a CLIO computation, found {other}")),
    }
}

fn synth(env: &mut Env, t: &Term) -> Result<Type, TypeError> {
    match t {
        Term::Var(x) => match lookup(env, x) {
            Some(ty) => Ok(ty.clone()),
            None => err(t, format!("unbound variable `{x}`")),
        },
        Term::Lit(l) => Ok(match l {
            Lit::Unit => Type::Unit,
            Lit::Bool(_) => Type::Bool,
            Lit::Int(_) => Type::Int,
            Lit::Text(_) => Type::Text,
            Lit::Label(_) => Type::Label,
        }),
        Term::Lam { var, ty: Some(a), body } => {
            env.push((var.clone(), a.clone()));
            let b = synth(env, body);
            env.pop();
            Ok(Type::fun(a.clone(), b?))
        }
        Term::Lam { ty: None, .. } => err(t, "cannot infer the type of an unannotated lambda here"),
        Term::App(f, a) => {
            if let Term::Lam { var, ty: None, body } = &**f {
                let at = synth(env, a)?;
                env.push((var.clone(), at));
                let r = synth(env, body);
                env.pop();
                return r;
            }
            match synth(env, f)? {
                Type::Fun(x, y) => {
                    check(env, a, &x)?;
                    Ok(*y)
                }
                other => err(t, format!("applying a non-function of type {other}")),
            }
        }
        Term::Fix(f) => match synth(env, f)? {
            Type::Fun(a, b) if a == b => Ok(*a),
            other => err(t, format!("fix expects a function of type τ -> τ, found {other}")),
        },
        Term::If(c, a, b) => {
            check(env, c, &Type::Bool)?;
            let ty = synth(env, a)?;
            check(env, b, &ty)?;
            Ok(ty)
        }
        Term::Pair(a, b) => Ok(Type::pair(synth(env, a)?, synth(env, b)?)),
        Term::Fst(p) | Term::Snd(p) => match synth(env, p)? {
            Type::Pair(a, b) => Ok(if matches!(t, Term::Fst(_)) { *a } else { *b }),
            other => err(t, format!("projection from non-pair of type {other}")),
        },
        Term::Prim(op, a, b) => {
            check(env, a, &Type::Int)?;
            check(env, b, &Type::Int)?;
            Ok(match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => Type::Int,
                BinOp::Eq | BinOp::Lt | BinOp::Le => Type::Bool,
            })
        }
        Term::Labeled(lv) => Ok(Type::labeled(lv.value.type_of())),
        Term::Return(a) => Ok(Type::clio(synth(env, a)?)),
        Term::Lio(a) => Ok(Type::clio(synth(env, a)?)),
        Term::Bind(m, k) => {
            let a = expect_clio(m, synth(env, m)?)?;
            let r = synth_fn_with_arg(env, k, a)?;
            match r {
                Type::Clio(_) => Ok(r),
                other => err(k, format!("bind continuation must return a CLIO computation, found {other}")),
            }
        }
        Term::Label(l, v) => {
            check(env, l, &Type::Label)?;
            let ty = synth(env, v)?;
            if !ty.is_ground() {
                return err(v, format!("only ground values can be labeled, found {ty}"));
            }
            Ok(Type::clio(Type::labeled(ty)))
        }
        Term::Unlabel(v) => match synth(env, v)? {
            Type::Labeled(a) => Ok(Type::clio(*a)),
            other => err(t, format!("unlabel expects a labeled value, found {other}")),
        },
        Term::GetLabel | Term::GetClearance => Ok(Type::clio(Type::Label)),
        Term::ToLabeled(l, m) => {
            check(env, l, &Type::Label)?;
            let a = expect_clio(m, synth(env, m)?)?;
            if !a.is_ground() {
                return err(m, format!("toLabeled body must produce a ground value, found {a}"));
            }
            Ok(Type::clio(Type::labeled(a)))
        }
        Term::Store(k, v) => {
            let kt = synth(env, k)?;
            if !kt.is_ground() {
                return err(k, format!("store keys must be ground, found {kt}"));
            }
            match synth(env, v)? {
                Type::Labeled(_) => Ok(Type::clio(Type::Unit)),
                other => err(v, format!("store expects a labeled value, found {other}")),
            }
        }
        Term::Fetch(ty, k, d) => {
            if !ty.is_ground() {
                return err(t, format!("fetch type must be ground, found {ty}"));
            }
            let kt = synth(env, k)?;
            if !kt.is_ground() {
                return err(k, format!("fetch keys must be ground, found {kt}"));
            }
            check(env, d, &Type::labeled(ty.clone()))?;
            Ok(Type::clio(Type::labeled(ty.clone())))
        }
        Term::Reset { body, .. } => {
            let a = expect_clio(body, synth(env, body)?)?;
            Ok(Type::clio(Type::labeled(a)))
        }
    }
}

/// Type of applying `k` to an argument of type `arg`.
fn synth_fn_with_arg(env: &mut Env, k: &Term, arg: Type) -> Result<Type, TypeError> {
    match k {
        Term::Lam { var, ty, body } => {
            if let Some(ann) = ty {
                expect_eq(k, &arg, ann)?;
            }
            env.push((var.clone(), arg));
            let r = synth(env, body);
            env.pop();
            r
        }
        _ => match synth(env, k)? {
            Type::Fun(x, y) => {
                expect_eq(k, &arg, &x)?;
                Ok(*y)
            }
            other => err(k, format!("expected a function, found {other}")),
        },
    }
}

fn check(env: &mut Env, t: &Term, ty: &Type) -> Result<(), TypeError> {
    match (t, ty) {
        (Term::Lam { var, ty: ann, body }, Type::Fun(a, b)) => {
            if let Some(ann) = ann {
                expect_eq(t, ann, a)?;
            }
            env.push((var.clone(), (**a).clone()));
            let r = check(env, body, b);
            env.pop();
            r
        }
        (Term::If(c, a, b), _) => {
            check(env, c, &Type::Bool)?;
            check(env, a, ty)?;
            check(env, b, ty)
        }
        (Term::Pair(a, b), Type::Pair(x, y)) => {
            check(env, a, x)?;
            check(env, b, y)
        }
        (Term::Return(a), Type::Clio(x)) => check(env, a, x),
        (Term::Fix(f), _) => check(env, f, &Type::fun(ty.clone(), ty.clone())),
        (Term::App(f, a), _) if matches!(&**f, Term::Lam { ty: None, .. }) => {
            let Term::Lam { var, body, .. } = &**f else { unreachable!() };
            let at = synth(env, a)?;
            env.push((var.clone(), at));
            let r = check(env, body, ty);
            env.pop();
            r
        }
        (Term::Bind(m, k), Type::Clio(_)) => {
            let a = expect_clio(m, synth(env, m)?)?;
            match &**k {
                Term::Lam { var, ty: ann, body } => {
                    if let Some(ann) = ann {
                        expect_eq(k, &a, ann)?;
                    }
                    env.push((var.clone(), a));
                    let r = check(env, body, ty);
                    env.pop();
                    r
                }
                _ => check(env, k, &Type::fun(a, ty.clone())),
            }
        }
        _ => {
            let got = synth(env, t)?;
            expect_eq(t, &got, ty)
        }
    }
}
