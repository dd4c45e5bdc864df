import init, { analyze, run_program, check } from './pkg/nullit_web.js';

const EXAMPLES = {
  ctor_escape: `class C extends Object {
  field f ref
  ctor (0, 1) {
    load 0
    load 0
    invokevirtual C.m 1
    pop
    load 0
    new Object
    dup
    invokespecial Object.<init> 0
    putfield C.f
    return
  }
  method m (1, 2) {
    load 1
    getfield C.f
    areturn
  }
}
class Main extends Object {
  static main (0, 1) {
    new C
    dup
    invokespecial C.<init> 0
    store 0
    load 0
    load 0
    invokevirtual C.m 1
    pop
    return
  }
}
`,
  ifnull_guard: `class Doc extends Object {
  field text ref
  ctor (0, 1) {
    load 0
    new Object
    dup
    invokespecial Object.<init> 0
    putfield Doc.text
    return
  }
}
class Printer extends Object {
  field current ref
  ctor (0, 1) {
    load 0
    new Doc
    dup
    invokespecial Doc.<init> 0
    putfield Printer.current
    return
  }
  method print (1, 2) {
    load 1
    ifnull L1
    load 1
    getfield Doc.text
    pop
    load 0
    load 1
    putfield Printer.current
   L1:
    return
  }
}
class Main extends Object {
  static main (1, 3) : int {
    load 0
    ifeq L1
    new Doc
    dup
    invokespecial Doc.<init> 0
    store 1
    goto L2
   L1:
    aconst_null
    store 1
   L2:
    new Printer
    dup
    invokespecial Printer.<init> 0
    store 2
    load 2
    load 1
    invokevirtual Printer.print 1
    return
  }
}
`,
};

const $ = (id) => document.getElementById(id);
const out = $('out');

function show(json, render) {
  const v = JSON.parse(json);
  if (v.error) {
    out.className = 'error';
    out.textContent = v.error;
  } else {
    out.className = '';
    out.textContent = render(v);
  }
}

function annotations(v) {
  const lines = [];
  for (const [f, a] of Object.entries(v.annotations.fields)) lines.push(`field  ${f}  ${a}`);
  for (const [m, a] of Object.entries(v.annotations.methods)) {
    const parts = [];
    if (a.this) parts.push(`this ${a.this}`);
    for (const [i, p] of Object.entries(a.params)) parts.push(`param ${i} ${p}`);
    if (a.return) parts.push(`return ${a.return}`);
    if (parts.length) lines.push(`method ${m}  ${parts.join(', ')}`);
  }
  lines.push('');
  for (const [site, d] of Object.entries(v.dereferences.sites)) {
    lines.push(`${d.safe ? 'safe  ' : 'UNSAFE'} ${site} ${d.category} on ${d.receiver}`);
  }
  return lines.join('\n') + '\n\n' + v.stats_text;
}

await init();
for (const name of Object.keys(EXAMPLES)) $('example').add(new Option(name, name));
$('source').value = EXAMPLES.ctor_escape;
$('example').onchange = () => { $('source').value = EXAMPLES[$('example').value]; };
$('analyze').onclick = () => show(analyze($('source').value, $('config').value), annotations);
$('run').onclick = () => show(run_program($('source').value, Number($('seed').value) >>> 0), (v) =>
  `inputs [${v.inputs.join(', ')}], ${v.steps} steps, ${v.status}\n\n${v.trace}${v.truncated ? '\n…' : ''}`);
$('check').onclick = () => show(check($('source').value, 10), (v) =>
  Object.entries(v).map(([c, vs]) => `${c}: ${vs.length ? vs.join('\n  ') : 'no violations'}`).join('\n'));
$('analyze').onclick();
