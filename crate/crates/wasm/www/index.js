import init, { explorePushforward, reproduceFigure, SynthDemo } from "./pkg/pirkit_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const list = (id) => $(id).value.split(/[\s,]+/).filter(Boolean).map(Number);
const fmt = (x) => (Number.isInteger(x) ? String(x) : x.toFixed(4));

function table(rows) {
  const t = document.createElement("table");
  for (const [k, v, cls] of rows) {
    const tr = t.insertRow();
    tr.insertCell().textContent = k;
    const td = tr.insertCell();
    if (v instanceof Node) td.append(v);
    else td.textContent = v;
    if (cls) tr.className = cls;
  }
  return t;
}

function showError(el, e) {
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(e?.message ?? e);
  el.replaceChildren(p);
}

function explore() {
  const out = $("pf-out");
  try {
    const s = JSON.parse(explorePushforward(list("pf-probs"), list("pf-labels"), num("pf-bin")));
    const bars = document.createElement("div");
    for (const [label, mass] of s.pushforward) {
      const row = document.createElement("div");
      const bar = document.createElement("span");
      bar.className = "bar";
      bar.style.width = `${mass * 300}px`;
      row.append(`${fmt(label)}  `, bar, `  ${mass.toFixed(4)}`);
      bars.append(row);
    }
    out.replaceChildren(
      table([
        ["transform entropy (bits)", fmt(s.transform_entropy)],
        ["label entropy (bits)", fmt(s.label_entropy)],
        ["mode label", fmt(s.mode_label)],
        ["most likely label", `${fmt(s.mli)} (mass ${s.mli_mass.toFixed(4)})`],
        ["disagree", s.disagreement ? "yes" : "no", s.disagreement ? "fail" : ""],
        ["mean ± std", `${fmt(s.mean)} ± ${fmt(s.std)}`],
        ["IQR", fmt(s.iqr)],
        ["label distribution", bars],
      ]),
    );
  } catch (e) {
    showError(out, e);
  }
}

function synth() {
  const out = $("sy-out");
  const layers = $("sy-layers");
  try {
    const t0 = performance.now();
    const demo = new SynthDemo(
      num("sy-size"), num("sy-amp"), num("sy-width"), num("sy-radius"),
      num("sy-sigma"), num("sy-beta"), num("sy-gamma"), num("sy-bin"),
    );
    const ms = performance.now() - t0;
    const r = JSON.parse(demo.report());
    out.replaceChildren(
      table([
        ["mean abs error, unregistered", fmt(r.identity_error.mean_abs)],
        ["mean abs error, mode label", fmt(r.mode_error.mean_abs)],
        ["mean abs error, most likely label", fmt(r.mli_error.mean_abs)],
        ["voxels where they disagree", r.count_disagreement],
        ["mode closer / MLI closer", `${r.count_mode_beats_mli} / ${r.count_mli_beats_mode}`],
        ["transform entropy, flat / edge", `${fmt(r.regions.constant_transform_entropy)} / ${fmt(r.regions.edge_transform_entropy)}`],
        ["label entropy, flat / edge", `${fmt(r.regions.constant_label_entropy)} / ${fmt(r.regions.edge_label_entropy)}`],
        ["run time", `${ms.toFixed(0)} ms`],
      ]),
    );
    const n = demo.size;
    layers.replaceChildren();
    for (const name of demo.layerNames()) {
      const canvas = document.createElement("canvas");
      canvas.width = n;
      canvas.height = n;
      const px = new Uint8ClampedArray(demo.layer(name));
      canvas.getContext("2d").putImageData(new ImageData(px, n, n), 0, 0);
      const fig = document.createElement("figure");
      const cap = document.createElement("figcaption");
      cap.textContent = name.replace(/_/g, " ");
      fig.append(canvas, cap);
      layers.append(fig);
    }
    demo.free();
  } catch (e) {
    layers.replaceChildren();
    showError(out, e);
  }
}

function figure() {
  const out = $("fig-out");
  try {
    const r = JSON.parse(reproduceFigure(num("fig-n")));
    const rows = r.checks.map((c) => [
      c.quantity,
      `${fmt(c.value)}  (target ${c.target} ± ${c.tolerance}) ${c.pass ? "ok" : "FAIL"}`,
      c.pass ? "" : "fail",
    ]);
    for (const [label, mass] of r.pushforward) rows.push([`P(label = ${label})`, mass.toFixed(4)]);
    out.replaceChildren(table(rows));
  } catch (e) {
    showError(out, e);
  }
}

await init();
$("pf-run").onclick = explore;
$("sy-run").onclick = synth;
$("fig-run").onclick = figure;
explore();
figure();
