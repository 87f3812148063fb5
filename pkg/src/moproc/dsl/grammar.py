"""Grammar of the motion programming language.

`GRAMMAR` is the lark (LALR) grammar the parser runs on. `GRAMMAR_EBNF` is
the reader-facing description of the same language; the prompt emitter
embeds it verbatim.
"""

GRAMMAR = r"""
start: program

program: "task" STRING "{" item* "}"

?item: param
     | let
     | constraint
     | for_loop

param: "param" IDENT ":" ptype ["=" expr] ";"
!ptype: "float" | "vec3"

let: "let" IDENT "=" expr ";"

constraint: "constraint" selector ":" pred ["weight" expr] ";"

for_loop: "for" IDENT "in" domain "{" item* "}"

domain: "joints"                     -> all_joints
      | "[" IDENT ("," IDENT)* "]"   -> joint_list
      | fref ".." fref               -> frame_span

selector: "all" "frames"                 -> all_frames
        | "frame" fref                   -> frame_at
        | "frames" fref ".." fref        -> frame_range
        | "frames" "[" fref ("," fref)* "]" -> frame_set

!fref: NUMBER | "first" | "mid" | "last" | IDENT

?pred: conj
     | pred "or" conj        -> disj

?conj: guard
     | conj "and" guard      -> conj_and

?guard: "when" "(" pred ")" guard -> when
      | pred_atom

?pred_atom: cmp
          | "(" pred ")"

cmp: expr "==" expr [IDENT NUMBER]   -> eq
   | expr "<" expr                   -> lt
   | expr ">" expr                   -> gt
   | "far" "(" expr "," expr ")"     -> far

?expr: sum

?sum: product
    | sum "+" product        -> add
    | sum "-" product        -> sub

?product: unary
        | product "*" unary  -> mul
        | product "/" unary  -> div

?unary: postfix
      | "-" unary            -> neg

?postfix: atom
        | postfix "." ATTR   -> attr

?atom: NUMBER                               -> number
     | IDENT                                -> name
     | IDENT "(" [expr ("," expr)*] ")"     -> call
     | "(" expr ")"
     | "(" expr "," expr "," expr ")"       -> vec

ATTR: "pos" | "vel" | "acc" | "x" | "y" | "z"
IDENT: /[A-Za-z_][A-Za-z0-9_]*/
NUMBER: /\d+(\.\d+)?([eE][+-]?\d+)?/
COMMENT: /#[^\n]*/

%import common.ESCAPED_STRING -> STRING
%import common.WS
%ignore WS
%ignore COMMENT
"""

RESERVED_WORDS = frozenset(
    {
        "task",
        "param",
        "let",
        "constraint",
        "weight",
        "for",
        "in",
        "joints",
        "all",
        "frames",
        "frame",
        "first",
        "mid",
        "last",
        "and",
        "or",
        "when",
        "far",
        "float",
        "vec3",
    }
)

GRAMMAR_EBNF = """\
program    = "task" STRING "{" item* "}" ;
item       = param | let | constraint | for ;
param      = "param" IDENT ":" ("float"|"vec3") ["=" expr] ";" ;
let        = "let" IDENT "=" expr ";" ;
constraint = "constraint" selector ":" pred ["weight" expr] ";" ;
for        = "for" IDENT "in" ("joints" | "[" IDENT {"," IDENT} "]" | fref ".." fref)
             "{" item* "}" ;
selector   = "all frames" | "frame" fref | "frames" fref ".." fref
           | "frames" "[" fref {"," fref} "]" ;
fref       = INT | "first" | "mid" | "last" | IDENT ;
pred       = cmp | pred "and" pred | pred "or" pred
           | "when" "(" pred ")" pred | "(" pred ")" ;
cmp        = expr ("=="|"<"|">") expr ["norm" INT] | "far" "(" expr "," expr ")" ;
expr       = arithmetic (+ - * /, unary -) over: NUMBER, (x, y, z) vectors,
             param/let names, joint(IDENT), bone(IDENT), com(),
             ".pos" ".vel" ".acc" ".x" ".y" ".z",
             dist(e,e), distToPoint(e, p3), distToPlane(e, plane(n3, off)),
             distToLine(e, line(p3, d3)), distToSphere(e, sphere(c3, r)),
             distToHalfspace(e, halfspace(n3, off)),
             distToSupport(e, support(IDENT, ...)),
             midpoint(e,e), dot(e,e), norm(e), angleTo(e, d3) ;
comment    = "#" any text to end of line ;
"""
