describe("crlf", () => {
  it("reloads", () => {
    cy.visit("/")
    cy.reload()
    cy.go("back")
  })
})
